//! The subcommands. Each one reads its section of the run config, calls into the
//! core library and hands tables, reports and verdicts to the [`Run`].

use std::fs;

use serde::{Deserialize, Serialize};
use zklab::decomp::{DecompRow, TileGeometry, TileIndex};
use zklab::estimates::{
    almost_conservation_scan, differentiation_refinement,
    orthogonality_scan, strichartz_gain_sweep, transversality_identity_sweep, verify_differentiation,
    verify_fti1_with, Comparison, DiffTarget, DriftRow, OrthogonalityRow, ScanSettings, SweepCell,
    SweepReport,
};
use zklab::functionals::{track, FunctionalSeries};
use zklab::io::{CsvTable, PlotSpec};
use zklab::solver::solve as integrate;
use zklab::{SolverConfig, SpectralField};

use crate::config::RunConfig;
use crate::output::Run;
use crate::UsageError;

pub const VERIFIERS: [&str; 5] = [
    "fti1",
    "differentiation",
    "strichartz",
    "transversality",
    "orthogonality",
];

fn initial_state(cfg: &RunConfig) -> anyhow::Result<SpectralField> {
    Ok(cfg.initial.build(cfg.lattice.build()?)?)
}

/// Relative change `|b - a| / |a|`, or the absolute change when `a` vanishes.
fn relative_drift(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        (b - a).abs()
    } else {
        (b - a).abs() / a.abs()
    }
}

fn series_table(s: &FunctionalSeries) -> anyhow::Result<CsvTable> {
    let mut t = CsvTable::new(&FunctionalSeries::COLUMNS);
    for row in s.rows() {
        t.push(row.iter().map(|&v| v.into()).collect())?;
    }
    Ok(t)
}

pub fn solve(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    let u0 = initial_state(cfg)?;
    let p = cfg.symbols.params()?;
    let tr = integrate(&u0, cfg.solve.horizon, &cfg.solver)?;
    let series = track(&tr, &p)?;
    run.csv("functionals.csv", series_table(&series)?)?;
    let spec = PlotSpec::line(
        "functionals.csv",
        "t",
        &["mass", "energy", "E0", "E1_tilde"],
        run.hash(),
    );
    run.plot("functionals.plot.json", spec)?;
    if cfg.solve.checkpoint {
        run.checkpoint("trajectory.bin", &tr)?;
    }
    let last = series.len() - 1;
    let mass = relative_drift(series.mass[0], series.mass[last]);
    let energy = relative_drift(series.energy[0], series.energy[last]);
    let (mt, et) = (cfg.solve.mass_tolerance, cfg.solve.energy_tolerance);
    run.verdict("conservation", "mass_drift", mass, "AtMost", mt, mass <= mt);
    run.verdict("conservation", "energy_drift", energy, "AtMost", et, energy <= et);
    Ok(())
}

/// Committed drift table that a scan is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReference {
    pub slope: f64,
    pub rows: Vec<DriftRow>,
}

pub fn scan_n(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    let u0 = initial_state(cfg)?;
    let settings = ScanSettings {
        s: cfg.symbols.s,
        n_list: cfg.scan.n_list.clone(),
        delta: cfg.scan.delta,
        norm: cfg.scan.norm,
        solver: cfg.solver,
        slope_threshold: cfg.scan.slope_threshold,
    };
    let (mut report, rows) = almost_conservation_scan(&u0, &settings)?;
    report.seed = cfg.seed;
    let slope = report.cell("slope").map(|c| c.observed).unwrap_or(f64::NAN);
    let mut table = CsvTable::new(&DriftRow::COLUMNS);
    for r in &rows {
        table.push(vec![
            r.n.into(),
            r.e1_start.into(),
            r.e1_end.into(),
            r.drift.into(),
            r.mass_drift.into(),
        ])?;
    }
    run.csv("drift.csv", table)?;
    let mut spec = PlotSpec::line("drift.csv", "N", &["drift", "mass_drift"], run.hash());
    spec.log_x = true;
    spec.log_y = true;
    run.plot("drift.plot.json", spec)?;
    run.json(
        "drift.reference.json",
        "scan_reference",
        &ScanReference {
            slope,
            rows: rows.clone(),
        },
    )?;
    if let Some(path) = &cfg.scan.reference {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read reference {}: {e}", path.display())))?;
        let reference: ScanReference = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("reference {} is malformed: {e}", path.display())))?;
        let tol = cfg.scan.reference_tolerance;
        let mut worst = 0.0f64;
        for r in &rows {
            let found = reference.rows.iter().find(|x| x.n == r.n).ok_or_else(|| {
                UsageError(format!("reference {} has no row for N = {}", path.display(), r.n))
            })?;
            worst = worst.max(relative_drift(found.drift, r.drift));
        }
        let cells = [
            ("reference_drift", worst),
            ("reference_slope", relative_drift(reference.slope, slope)),
        ];
        for (label, dev) in cells {
            report.push_cell(SweepCell::new(label, rows.len() as u64, dev, Comparison::AtMost, tol));
        }
    }
    run.report("scan", &report)
}

fn evolve(u0: &SpectralField, horizon: f64, dt: f64, base: &SolverConfig) -> anyhow::Result<SpectralField> {
    if horizon <= 0.0 {
        return Ok(u0.clone());
    }
    let steps = (horizon / dt).round().max(1.0) as usize;
    let cfg = SolverConfig {
        dt,
        record_every: steps,
        ..*base
    };
    Ok(integrate(u0, horizon, &cfg)?.last().clone())
}

fn differentiation(cfg: &RunConfig) -> anyhow::Result<SweepReport> {
    let spec = &cfg.verify.differentiation;
    let p = cfg.symbols.params()?;
    let u = evolve(&initial_state(cfg)?, spec.pre_evolve, spec.pre_evolve_dt, &cfg.solver)?;
    let window = SolverConfig {
        record_every: 1,
        ..cfg.solver
    };
    let tr = integrate(&u, 2.0 * cfg.solver.dt, &window)?;
    let mut report = SweepReport::new("differentiation", cfg.seed)
        .with_grid("pre_evolve", spec.pre_evolve)
        .with_grid("dt", cfg.solver.dt);
    for target in [DiffTarget::ModifiedMass, DiffTarget::Correction] {
        let label = target.label();
        let r = verify_differentiation(&tr, target, &p, spec.budget, spec.tolerance)?;
        report.absorb(&format!("{label}/"), r);
        if spec.dts.len() >= 2 {
            let r = differentiation_refinement(
                &u,
                target,
                &p,
                &cfg.solver,
                &spec.dts,
                spec.budget,
                spec.min_order,
            )?;
            report.absorb(&format!("{label}/"), r);
        }
    }
    Ok(report)
}

fn strichartz_report(cfg: &RunConfig) -> anyhow::Result<SweepReport> {
    let s = &cfg.strichartz;
    Ok(strichartz_gain_sweep(
        s.n3,
        &s.factors,
        s.trials,
        cfg.seed,
        &s.options,
        s.slack,
    )?)
}

fn transversality_report(cfg: &RunConfig) -> anyhow::Result<SweepReport> {
    let t = &cfg.transversality;
    Ok(transversality_identity_sweep(
        t.samples,
        t.range,
        cfg.seed,
        t.tolerance,
    )?)
}

fn orthogonality(cfg: &RunConfig) -> anyhow::Result<(SweepReport, Vec<OrthogonalityRow>)> {
    let d = &cfg.decomp;
    Ok(orthogonality_scan(
        &d.a_list,
        &d.case,
        d.samples,
        cfg.seed,
        d.bound,
        d.stability,
    )?)
}

/// Checks the verifier names before anything runs.
pub fn check_verifiers(names: &[String]) -> Result<(), UsageError> {
    if names.is_empty() {
        return Err(UsageError(format!(
            "no verifiers selected; available: {}",
            VERIFIERS.join(", ")
        )));
    }
    for n in names {
        if !VERIFIERS.contains(&n.as_str()) {
            return Err(UsageError(format!(
                "unknown verifier `{n}`; available: {}",
                VERIFIERS.join(", ")
            )));
        }
    }
    Ok(())
}

pub fn verify(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    check_verifiers(&cfg.verify.verifiers)?;
    for name in &cfg.verify.verifiers {
        let report = match name.as_str() {
            "fti1" => verify_fti1_with(
                &cfg.symbols.params()?,
                cfg.verify.fti1.samples,
                cfg.seed,
                cfg.verify.fti1.constant,
            )?,
            "differentiation" => differentiation(cfg)?,
            "strichartz" => strichartz_report(cfg)?,
            "transversality" => transversality_report(cfg)?,
            "orthogonality" => orthogonality(cfg)?.0,
            _ => unreachable!("names were checked"),
        };
        run.report(name, &report)?;
    }
    Ok(())
}

pub fn strichartz(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    let report = strichartz_report(cfg)?;
    let mut table = CsvTable::new(&["N1", "N3", "constant"]);
    let n3 = cfg.strichartz.n3;
    for (&f, cell) in cfg.strichartz.factors.iter().zip(&report.cells) {
        table.push(vec![(f * n3.max(1)).into(), n3.into(), cell.observed.into()])?;
    }
    run.csv("strichartz.csv", table)?;
    let mut spec = PlotSpec::line("strichartz.csv", "N1", &["constant"], run.hash());
    spec.log_x = true;
    run.plot("strichartz.plot.json", spec)?;
    run.report("strichartz", &report)
}

pub fn transversality(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    let report = transversality_report(cfg)?;
    run.report("transversality", &report)
}

fn tile_text(k: TileIndex) -> String {
    format!("{}:{}", k.kx, k.ky)
}

/// `count` first tiles spread evenly over the half-open range.
fn spread(range: (i64, i64), count: u64) -> Vec<i64> {
    let (lo, hi) = range;
    let width = (hi - lo) as u64;
    let count = count.min(width).max(1);
    (0..count).map(|i| lo + (i * width / count) as i64).collect()
}

pub fn decomp_stats(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    let d = &cfg.decomp;
    let (report, counts) = orthogonality(cfg)?;
    let mut table = CsvTable::new(&DecompRow::COLUMNS);
    for &a in &d.a_list {
        let geo = TileGeometry::new(a, d.n1)?;
        let (xr, yr) = d.case.first_tiles(a);
        let xs = spread(xr, d.table_tiles);
        let ys = spread(yr, d.table_tiles);
        for (&kx, &ky) in xs.iter().zip(ys.iter().cycle()) {
            let k1 = TileIndex::new(kx, ky);
            let ((x0, x1), (y0, y1)) = d.case.partner_tiles(k1, a);
            for x in x0..x1 {
                for y in y0..y1 {
                    let k2 = TileIndex::new(x, y);
                    let c = geo.classify(k1, k2);
                    table.push(vec![
                        a.into(),
                        d.n1.into(),
                        tile_text(k1).into(),
                        tile_text(k2).into(),
                        c.h1_min.into(),
                        c.h2_min.into(),
                        c.in_z1.into(),
                        c.in_z2.into(),
                    ])?;
                }
            }
        }
    }
    run.csv("decomp.csv", table)?;
    let mut t = CsvTable::new(&OrthogonalityRow::COLUMNS);
    for r in &counts {
        t.push(vec![
            r.a.into(),
            r.tiles.into(),
            r.max_count.into(),
            r.mean_count.into(),
            r.argmax.kx.into(),
            r.argmax.ky.into(),
        ])?;
    }
    run.csv("orthogonality.csv", t)?;
    let mut spec = PlotSpec::line("orthogonality.csv", "A", &["max_count", "mean_count"], run.hash());
    spec.log_x = true;
    run.plot("orthogonality.plot.json", spec)?;
    run.report("orthogonality", &report)
}
