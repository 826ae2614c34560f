//! Run configuration: a single JSON document layered over built-in defaults, leaf
//! overrides by dotted path, and a canonical hash stamped into every output.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use zklab::decomp::TransverseCase;
use zklab::estimates::StrichartzOptions;
use zklab::{FrequencyLattice, InitialData, SolverConfig, SymbolParams};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub box_length: f64,
    pub modes: usize,
}

impl LatticeSpec {
    pub fn build(&self) -> anyhow::Result<FrequencyLattice> {
        Ok(FrequencyLattice::new(self.box_length, self.modes)?)
    }
}

/// `gamma0 = null` selects the default `N^{-1/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSpec {
    pub s: f64,
    pub n: f64,
    pub gamma0: Option<f64>,
}

impl SymbolSpec {
    pub fn params(&self) -> anyhow::Result<SymbolParams> {
        Ok(match self.gamma0 {
            Some(g) => SymbolParams::new(self.s, self.n, g)?,
            None => SymbolParams::with_default_gamma(self.s, self.n)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    pub horizon: f64,
    pub checkpoint: bool,
    pub mass_tolerance: f64,
    pub energy_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub n_list: Vec<u64>,
    pub delta: f64,
    pub norm: f64,
    pub slope_threshold: f64,
    /// Committed drift table to compare against, relative to the config file.
    pub reference: Option<PathBuf>,
    pub reference_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fti1Spec {
    pub samples: u64,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifferentiationSpec {
    pub pre_evolve: f64,
    pub pre_evolve_dt: f64,
    pub tolerance: f64,
    pub budget: u64,
    pub dts: Vec<f64>,
    pub min_order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub verifiers: Vec<String>,
    pub fti1: Fti1Spec,
    pub differentiation: DifferentiationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrichartzSpec {
    pub n3: u64,
    pub factors: Vec<u64>,
    pub trials: usize,
    pub slack: f64,
    pub options: StrichartzOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransversalitySpec {
    pub samples: u64,
    pub range: i64,
    pub tolerance: f64,
}

/// `samples = null` scans every admissible first tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompSpec {
    pub a_list: Vec<u64>,
    pub n1: f64,
    pub case: TransverseCase,
    pub samples: Option<u64>,
    pub bound: f64,
    pub stability: f64,
    /// Number of first tiles per scale whose partner pairs are tabulated.
    pub table_tiles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: u64,
    pub out: PathBuf,
    pub lattice: LatticeSpec,
    pub initial: InitialData,
    pub solver: SolverConfig,
    pub symbols: SymbolSpec,
    pub solve: SolveSpec,
    pub scan: ScanSpec,
    pub verify: VerifySpec,
    pub strichartz: StrichartzSpec,
    pub transversality: TransversalitySpec,
    pub decomp: DecompSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: String::new(),
            seed: 1,
            out: PathBuf::from("out"),
            lattice: LatticeSpec {
                box_length: 2.0 * PI,
                modes: 64,
            },
            initial: InitialData::Gaussian {
                amplitude: 1.0,
                center: [0.5, 0.5],
                width: 0.5,
            },
            solver: SolverConfig {
                record_every: 50,
                ..SolverConfig::default()
            },
            symbols: SymbolSpec {
                s: -1.0 / 13.0,
                n: 16.0,
                gamma0: None,
            },
            solve: SolveSpec {
                horizon: 1.0,
                checkpoint: false,
                mass_tolerance: 1e-8,
                energy_tolerance: 1e-6,
            },
            scan: ScanSpec {
                n_list: vec![4, 8, 16, 32],
                delta: 0.5,
                norm: 1.0,
                slope_threshold: -0.2,
                reference: None,
                reference_tolerance: 0.1,
            },
            verify: VerifySpec {
                verifiers: vec!["fti1".into(), "transversality".into()],
                fti1: Fti1Spec {
                    samples: 100_000,
                    constant: zklab::estimates::FTI1_CONSTANT,
                },
                differentiation: DifferentiationSpec {
                    pre_evolve: 0.05,
                    pre_evolve_dt: 1e-4,
                    tolerance: 1e-4,
                    budget: u64::MAX,
                    dts: vec![1e-2, 1e-3, 1e-4],
                    min_order: 1.8,
                },
            },
            strichartz: StrichartzSpec {
                n3: 1,
                factors: vec![4, 16, 64],
                trials: 4,
                slack: 2.0,
                options: StrichartzOptions::default(),
            },
            transversality: TransversalitySpec {
                samples: 10_000,
                range: 100,
                tolerance: 1e-10,
            },
            decomp: DecompSpec {
                a_list: vec![256, 512],
                n1: 1.0,
                case: TransverseCase::default(),
                samples: None,
                bound: 8.0,
                stability: 2.0,
                table_tiles: 4,
            },
        }
    }
}

/// Recursively layers `top` over `base`. Keys absent from `base` are rejected, except
/// below a tagged object whose `kind` changes, which is replaced wholesale.
fn merge(base: &mut Value, top: Value, path: &str) -> Result<(), UsageError> {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            let retagged = matches!((b.get("kind"), t.get("kind")), (Some(x), Some(y)) if x != y);
            if retagged {
                *b = t;
                return Ok(());
            }
            let tagged = b.contains_key("kind");
            for (k, v) in t {
                let here = join(path, &k);
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &here)?,
                    None if tagged => {
                        b.insert(k, v);
                    }
                    None => return Err(UsageError(format!("unknown config key `{here}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Parses `KEY=VALUE`; the value is read as JSON when it parses, else as a string.
pub fn parse_override(spec: &str) -> Result<(String, Value), UsageError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| UsageError(format!("override `{spec}` is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(UsageError(format!("override `{spec}` has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets the leaf at a dotted path, building the nested object for the merge.
pub fn apply_override(doc: &mut Value, key: &str, value: Value) -> Result<(), UsageError> {
    let nested = key
        .rsplit('.')
        .fold(value, |acc, part| {
            let mut m = Map::new();
            m.insert(part.to_string(), acc);
            Value::Object(m)
        });
    merge(doc, nested, "")
}

/// Defaults, then the config file, then the overrides, then `experiment`.
pub fn resolve(
    file: Option<&Path>,
    overrides: &[String],
    experiment: &str,
) -> Result<RunConfig, UsageError> {
    let mut doc = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let top: Value = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {} is not valid JSON: {e}", path.display())))?;
        if !top.is_object() {
            return Err(UsageError(format!("config {} must be a JSON object", path.display())));
        }
        merge(&mut doc, top, "")?;
    }
    for spec in overrides {
        let (k, v) = parse_override(spec)?;
        apply_override(&mut doc, &k, v)?;
    }
    doc["experiment"] = Value::String(experiment.to_string());
    let mut cfg: RunConfig =
        serde_json::from_value(doc).map_err(|e| UsageError(format!("invalid config: {e}")))?;
    if let (Some(base), Some(r)) = (file.and_then(Path::parent), cfg.scan.reference.as_ref()) {
        if r.is_relative() && !base.as_os_str().is_empty() {
            cfg.scan.reference = Some(base.join(r));
        }
    }
    Ok(cfg)
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}:", Value::String(k.clone()));
                write_canonical(&m[k], out);
            }
            out.push('}');
        }
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(x, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

impl RunConfig {
    /// Compact JSON with sorted keys, without the output directory and with the
    /// reference table path reduced to its file name.
    pub fn canonical(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("out");
        }
        if let Some(r) = self.scan.reference.as_ref().and_then(|r| r.file_name()) {
            v["scan"]["reference"] = Value::String(r.to_string_lossy().into_owned());
        }
        let mut s = String::new();
        write_canonical(&v, &mut s);
        s
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
