//! Acceptance suite: one PASS or FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are still run and still print FAIL; a FAIL
//! verdict there does not fail the process. Any other FAIL, and any error or panic,
//! does. Pass criterion numbers as arguments to run a subset.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zklab::decomp::TransverseCase;
use zklab::estimates::{
    almost_conservation_scan, differentiation_refinement, loomis_whitney_d_law, orthogonality_scan,
    strichartz_gain_sweep, transversality_identity_sweep, verify_differentiation, verify_fti1,
    DiffTarget, ScanSettings, StrichartzOptions, SweepReport,
};
use zklab::functionals::track;
use zklab::io::CsvTable;
use zklab::solver::{energy, mass, solve};
use zklab::symbols::resonance_h3;
use zklab::{init, FreqPoint, FrequencyLattice, SolverConfig, SpectralField, SymbolParams, ZeroSumTriple};

const KNOWN_FAILURES: &[u32] = &[7];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Result<Outcome, Box<dyn std::error::Error>>;

fn cells(report: &SweepReport) -> String {
    report
        .cells
        .iter()
        .map(|c| format!("{}={:.4e} (limit {:e})", c.label, c.observed, c.threshold))
        .collect::<Vec<_>>()
        .join(", ")
}

fn relative(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs()
}

fn conservation() -> Result<Outcome, Box<dyn std::error::Error>> {
    let l = FrequencyLattice::new(2.0 * PI, 128)?;
    let u0 = init::gaussian(l, 1.0, [0.5, 0.5], 0.5);
    let cfg = SolverConfig {
        dt: 1e-3,
        record_every: 1000,
        ..SolverConfig::default()
    };
    let start = Instant::now();
    let tr = solve(&u0, 1.0, &cfg)?;
    let elapsed = start.elapsed();
    let dm = relative(mass(&u0), mass(tr.last()));
    let de = relative(energy(&u0), energy(tr.last()));
    let pass = dm < 1e-8 && de < 1e-6 && elapsed < Duration::from_secs(120);
    Ok(Outcome::new(
        pass,
        format!("mass drift {dm:.3e} (< 1e-8), energy drift {de:.3e} (< 1e-6), {elapsed:.1?}"),
    ))
}

fn cube_identity() -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1_000_000 {
        let mut pick = || rng.gen_range(-1000i64..=1000) as f64;
        let t = ZeroSumTriple::from_pair(FreqPoint::new(pick(), pick()), FreqPoint::new(pick(), pick()));
        let cubes: f64 = t.0.iter().map(|z| z.dispersion()).sum();
        let p = 3.0 * resonance_h3(&t);
        let scale = t.0.iter().map(|z| z.xi.abs().powi(3) + z.eta.abs().powi(3)).sum::<f64>();
        if scale > 0.0 {
            worst = worst.max((cubes - p).abs() / scale);
        }
    }
    Ok(Outcome::new(
        worst <= 1e-12,
        format!("max relative error {worst:.3e} on 1e6 triples (<= 1e-12)"),
    ))
}

fn differentiation() -> Result<Outcome, Box<dyn std::error::Error>> {
    let l = FrequencyLattice::new(16.0 * PI, 32)?;
    let fine = SolverConfig {
        dt: 1e-4,
        record_every: 500,
        ..SolverConfig::default()
    };
    let u = solve(&init::gaussian(l, 3.0, [0.5, 0.5], 2.0), 0.05, &fine)?.last().clone();
    let p = SymbolParams::with_default_gamma(-1.0 / 13.0, 1.0)?;
    let base = SolverConfig::default();
    let tr = solve(&u, 2e-3, &base)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for target in [DiffTarget::ModifiedMass, DiffTarget::Correction] {
        let r = verify_differentiation(&tr, target, &p, u64::MAX, 1e-4)?;
        let o = differentiation_refinement(&u, target, &p, &base, &[1e-2, 1e-3, 1e-4], u64::MAX, 1.8)?;
        pass &= r.passed() && o.passed();
        parts.push(format!("{}: {}, {}", target.label(), cells(&r), cells(&o)));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn drift_scan() -> Result<Outcome, Box<dyn std::error::Error>> {
    let l = FrequencyLattice::new(2.0 * PI, 192)?;
    let u0 = init::band_limited(l, 1.0, 60.0, 2.0, 1.0, 1)?;
    let settings = ScanSettings {
        s: -1.0 / 13.0,
        n_list: vec![4, 8, 16, 32],
        delta: 0.5,
        norm: 1.0,
        solver: SolverConfig {
            dt: 5e-5,
            ..SolverConfig::default()
        },
        slope_threshold: -0.2,
    };
    let (report, rows) = almost_conservation_scan(&u0, &settings)?;
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/scan_reference.json");
    let reference: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let mut worst = 0.0f64;
    for r in &rows {
        let expected = reference["rows"]
            .as_array()
            .and_then(|a| a.iter().find(|x| x["n"] == r.n))
            .and_then(|x| x["drift"].as_f64())
            .ok_or("reference table lacks a row")?;
        worst = worst.max(relative(expected, r.drift));
    }
    let drifts: Vec<String> = rows.iter().map(|r| format!("N={}: {:.3e}", r.n, r.drift)).collect();
    Ok(Outcome::new(
        report.passed() && worst <= 0.1,
        format!(
            "{}, reference deviation {worst:.3e} (<= 0.1), drifts [{}]",
            cells(&report),
            drifts.join(", ")
        ),
    ))
}

fn fti1() -> Result<Outcome, Box<dyn std::error::Error>> {
    let p = SymbolParams::with_default_gamma(-1.0 / 13.0, 16.0)?;
    let r = verify_fti1(&p, 100_000, 1)?;
    Ok(Outcome::new(r.passed(), cells(&r)))
}

fn transversality() -> Result<Outcome, Box<dyn std::error::Error>> {
    let r = transversality_identity_sweep(10_000, 100, 3, 1e-10)?;
    Ok(Outcome::new(r.passed(), cells(&r)))
}

fn orthogonality() -> Result<Outcome, Box<dyn std::error::Error>> {
    let (r, rows) = orthogonality_scan(&[2048, 4096], &TransverseCase::default(), None, 0, 8.0, 2.0)?;
    let maxima: Vec<String> = rows.iter().map(|x| format!("A={}: {}", x.a, x.max_count)).collect();
    Ok(Outcome::new(
        r.passed(),
        format!("{}, maxima [{}]", cells(&r), maxima.join(", ")),
    ))
}

fn strichartz() -> Result<Outcome, Box<dyn std::error::Error>> {
    let r = strichartz_gain_sweep(1, &[4, 16, 64], 4, 1, &StrichartzOptions::default(), 2.0)?;
    Ok(Outcome::new(r.passed(), cells(&r)))
}

fn loomis_whitney() -> Result<Outcome, Box<dyn std::error::Error>> {
    let r = loomis_whitney_d_law(&[0.01, 0.02, 0.04, 0.08, 0.2], [80, 24], 3, 1, 0.15)?;
    let span = r.grid["d_span"].as_f64().unwrap_or(0.0);
    Ok(Outcome::new(
        r.passed() && span >= 16.0,
        format!("{}, d span {span:.2} (>= 16)", cells(&r)),
    ))
}

fn payloads() -> Result<Vec<String>, Box<dyn std::error::Error>> {
    let l = FrequencyLattice::new(2.0 * PI, 32)?;
    let u0: SpectralField = init::band_limited(l, 1.0, 8.0, 1.0, 1.0, 5)?;
    let cfg = SolverConfig {
        dt: 1e-3,
        record_every: 20,
        ..SolverConfig::default()
    };
    let series = track(&solve(&u0, 0.1, &cfg)?, &SymbolParams::with_default_gamma(-1.0 / 13.0, 2.0)?)?;
    let mut t = CsvTable::new(&zklab::functionals::FunctionalSeries::COLUMNS);
    for row in series.rows() {
        t.push(row.iter().map(|&v| v.into()).collect())?;
    }
    let mut out = vec![t.payload()];
    let p = SymbolParams::with_default_gamma(-1.0 / 13.0, 16.0)?;
    for report in [verify_fti1(&p, 5000, 9)?, transversality_identity_sweep(5000, 100, 9, 1e-10)?] {
        let mut t = CsvTable::new(&SweepReport::COLUMNS);
        for o in &report.observations {
            t.push(vec![o.cell.clone().into(), o.x.into(), o.y.into()])?;
        }
        out.push(t.payload());
    }
    Ok(out)
}

fn determinism() -> Result<Outcome, Box<dyn std::error::Error>> {
    let first = payloads()?;
    let second = payloads()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build()?;
    let third = pool.install(|| payloads().map_err(|e| e.to_string()))?;
    let same = first == second && first == third;
    let bytes: usize = first.iter().map(String::len).sum();
    Ok(Outcome::new(
        same,
        format!("{} payloads, {bytes} bytes, identical across reruns and thread counts: {same}", first.len()),
    ))
}

fn main() {
    let criteria: [(u32, &str, Check); 10] = [
        (1, "conservation", conservation),
        (2, "cube identity", cube_identity),
        (3, "differentiation formula", differentiation),
        (4, "almost conservation scaling", drift_scan),
        (5, "pointwise M3 bound", fti1),
        (6, "transversality determinant", transversality),
        (7, "Whitney almost orthogonality", orthogonality),
        (8, "bilinear Strichartz gain", strichartz),
        (9, "Loomis-Whitney d-law", loomis_whitney),
        (10, "determinism", determinism),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail, broken) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(Ok(o)) => (o.pass, o.detail, false),
            Ok(Err(e)) => (false, format!("error: {e}"), true),
            Err(_) => (false, "panicked".to_string(), true),
        };
        let known = KNOWN_FAILURES.contains(&id) && !broken;
        if !pass && !known {
            unexpected += 1;
        }
        println!(
            "{} criterion {id} ({name}): {detail} [{:.1?}]{}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed(),
            if !pass && known { " (known failure)" } else { "" }
        );
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failure(s)");
        std::process::exit(1);
    }
}
