//! Persistence: CSV tables with 17 significant digits, atomic file writes,
//! trajectory checkpoints (binary payload plus JSON sidecar) and plot specs.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lattice::FrequencyLattice;
use crate::solver::{SolverConfig, Trajectory};

/// Version of the library, stamped into every output.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

const MAGIC: &[u8; 8] = b"ZKTRAJ01";

/// A float with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

fn render(cell: &Cell) -> String {
    match cell {
        Cell::Float(v) => fmt_f64(*v),
        Cell::Int(v) => v.to_string(),
        Cell::Bool(v) => v.to_string(),
        Cell::Text(s) => {
            if s.contains([',', '"', '\n', '\r']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        }
    }
}

/// A CSV table preceded by `# key=value` provenance lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub provenance: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self { provenance: Vec::new(), columns: columns.iter().map(|c| c.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    /// Adds the `config_hash` and `code_version` provenance lines.
    pub fn stamped(mut self, config_hash: &str) -> Self {
        self.provenance.push(("config_hash".into(), config_hash.into()));
        self.provenance.push(("code_version".into(), CODE_VERSION.into()));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Format(format!("row has {} cells, expected {}", row.len(), self.columns.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Comma separated, LF terminated.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.provenance {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// The rendered table without its provenance lines.
    pub fn payload(&self) -> String {
        let mut t = self.clone();
        t.provenance.clear();
        t.render()
    }
}

/// Value of a `# key=value` provenance line of a rendered CSV.
pub fn csv_provenance(text: &str, key: &str) -> Option<String> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.trim_start_matches('#').trim().split_once('='))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.to_string())
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} is not a file path", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Provenance of a trajectory checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub lattice: FrequencyLattice,
    pub config: SolverConfig,
    pub seed: u64,
    pub code_version: String,
    pub config_hash: String,
    pub states: usize,
    pub payload: String,
}

/// Path of the JSON sidecar of a checkpoint.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Little-endian binary layout: magic, box length, modes, state count, the times,
/// then every state's coefficients as `(re, im)` pairs in row-major order.
pub fn encode_trajectory(tr: &Trajectory) -> Vec<u8> {
    let l = tr.lattice();
    let mut out = Vec::with_capacity(32 + tr.len() * (8 + 16 * l.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&l.box_length().to_le_bytes());
    out.extend_from_slice(&(l.modes() as u64).to_le_bytes());
    out.extend_from_slice(&(tr.len() as u64).to_le_bytes());
    for t in &tr.times {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for s in &tr.states {
        for c in s.coeffs() {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
}

/// Inverse of [`encode_trajectory`]; the solver configuration comes from the sidecar.
pub fn decode_trajectory(bytes: &[u8], config: SolverConfig) -> Result<Trajectory> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a trajectory checkpoint".into()));
    }
    let lattice = FrequencyLattice::new(r.f64()?, r.u64()? as usize)?;
    let count = r.u64()? as usize;
    let times = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let mut states = Vec::with_capacity(count);
    for _ in 0..count {
        let coeffs = (0..lattice.len())
            .map(|_| Ok(Complex64::new(r.f64()?, r.f64()?)))
            .collect::<Result<Vec<_>>>()?;
        states.push(SpectralField::from_coeffs(lattice, coeffs)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    Ok(Trajectory { states, times, config })
}

/// Writes the binary checkpoint and its sidecar, both atomically.
pub fn write_checkpoint(path: &Path, tr: &Trajectory, seed: u64, config_hash: &str) -> Result<CheckpointMeta> {
    let meta = CheckpointMeta {
        lattice: *tr.lattice(),
        config: tr.config,
        seed,
        code_version: CODE_VERSION.into(),
        config_hash: config_hash.into(),
        states: tr.len(),
        payload: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    write_atomic(path, &encode_trajectory(tr))?;
    write_json_atomic(&sidecar_path(path), &meta)?;
    Ok(meta)
}

pub fn read_checkpoint(path: &Path) -> Result<(Trajectory, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let tr = decode_trajectory(&fs::read(path)?, meta.config)?;
    if tr.lattice() != &meta.lattice || tr.len() != meta.states {
        return Err(Error::Format("checkpoint payload disagrees with its sidecar".into()));
    }
    Ok((tr, meta))
}

/// Names the columns of a CSV output for external plotting tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub file: String,
    pub kind: String,
    pub x: String,
    pub y: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub config_hash: String,
    pub code_version: String,
}

impl PlotSpec {
    pub fn line(file: &str, x: &str, y: &[&str], config_hash: &str) -> Self {
        Self {
            file: file.into(),
            kind: "line".into(),
            x: x.into(),
            y: y.iter().map(|s| s.to_string()).collect(),
            group_by: None,
            log_x: false,
            log_y: false,
            config_hash: config_hash.into(),
            code_version: CODE_VERSION.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init;
    use crate::solver::solve;

    #[test]
    fn floats_round_trip_with_seventeen_digits() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn csv_layout() {
        let mut t = CsvTable::new(&["a", "b", "c"]).stamped("abc123");
        t.push(vec![1.5.into(), 2i64.into(), "x,y".into()]).unwrap();
        assert!(t.push(vec![1.0.into()]).is_err());
        let text = t.render();
        assert!(!text.contains('\r'));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# config_hash=abc123");
        assert_eq!(lines[2], "a,b,c");
        assert_eq!(lines[3], "1.5000000000000000e0,2,\"x,y\"");
        assert_eq!(csv_provenance(&text, "code_version").as_deref(), Some(CODE_VERSION));
        assert!(!t.payload().contains('#'));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"second");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/x.txt"), b"").is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let l = FrequencyLattice::new(2.0 * std::f64::consts::PI, 16).unwrap();
        let u = init::gaussian(l, 1.0, [0.5, 0.5], 0.7);
        let tr = solve(&u, 0.01, &SolverConfig { dt: 0.005, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.bin");
        write_checkpoint(&p, &tr, 9, "hash").unwrap();
        let (back, meta) = read_checkpoint(&p).unwrap();
        assert_eq!(meta.seed, 9);
        assert_eq!(meta.states, 3);
        assert_eq!(back.times, tr.times);
        assert_eq!(back.states, tr.states);
        let mut bytes = encode_trajectory(&tr);
        bytes.pop();
        assert!(decode_trajectory(&bytes, tr.config).is_err());
        assert!(decode_trajectory(b"garbage!", tr.config).is_err());
    }
}
