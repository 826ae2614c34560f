//! Output directory of one run: stamped CSV and JSON files written atomically, the
//! verdicts collected along the way, and the closing run record.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use zklab::estimates::SweepReport;
use zklab::io::{write_atomic, write_json_atomic, CsvTable, PlotSpec, CODE_VERSION};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub cell: String,
    pub observed: f64,
    pub comparison: String,
    pub threshold: f64,
    pub pass: bool,
}

/// Manifest of a finished run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub code_version: String,
    pub experiment: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<ManifestEntry>,
    pub verdicts: Vec<Verdict>,
    pub flags: Vec<String>,
    pub passed: bool,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    code_version: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub struct Run {
    dir: PathBuf,
    hash: String,
    config: RunConfig,
    started: f64,
    files: Vec<ManifestEntry>,
    verdicts: Vec<Verdict>,
    flags: Vec<String>,
}

impl Run {
    /// Creates the output directory and writes the resolved config into it.
    pub fn start(config: &RunConfig) -> anyhow::Result<Self> {
        let dir = config.out.clone();
        fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let mut run = Self {
            dir,
            hash: config.hash(),
            config: config.clone(),
            started: now(),
            files: Vec::new(),
            verdicts: Vec::new(),
            flags: Vec::new(),
        };
        run.json("config.json", "config", config)?;
        Ok(run)
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str, kind: &str) {
        self.files.push(ManifestEntry {
            path: name.to_string(),
            kind: kind.to_string(),
        });
    }

    /// A CSV table with `# config_hash` and `# code_version` lines above the header.
    pub fn csv(&mut self, name: &str, table: CsvTable) -> anyhow::Result<()> {
        let text = table.stamped(&self.hash).render();
        write_atomic(&self.path(name), text.as_bytes())
            .with_context(|| format!("cannot write {name}"))?;
        self.record(name, "csv");
        Ok(())
    }

    /// A JSON document with top-level `config_hash` and `code_version` keys.
    pub fn json<T: Serialize>(&mut self, name: &str, kind: &str, body: &T) -> anyhow::Result<()> {
        let doc = Stamped {
            config_hash: &self.hash,
            code_version: CODE_VERSION,
            body,
        };
        write_json_atomic(&self.path(name), &doc).with_context(|| format!("cannot write {name}"))?;
        self.record(name, kind);
        Ok(())
    }

    pub fn plot(&mut self, name: &str, spec: PlotSpec) -> anyhow::Result<()> {
        write_json_atomic(&self.path(name), &spec).with_context(|| format!("cannot write {name}"))?;
        self.record(name, "plot_spec");
        Ok(())
    }

    pub fn checkpoint(&mut self, name: &str, tr: &zklab::Trajectory) -> anyhow::Result<()> {
        zklab::io::write_checkpoint(&self.path(name), tr, self.config.seed, &self.hash)
            .with_context(|| format!("cannot write {name}"))?;
        self.record(name, "checkpoint");
        self.record(&format!("{name}.json"), "checkpoint_sidecar");
        Ok(())
    }

    pub fn verdict(&mut self, name: &str, cell: &str, observed: f64, cmp: &str, threshold: f64, pass: bool) {
        self.verdicts.push(Verdict {
            name: name.to_string(),
            cell: cell.to_string(),
            observed,
            comparison: cmp.to_string(),
            threshold,
            pass,
        });
    }

    /// Writes `<stem>.report.json`, `<stem>.cells.csv` and `<stem>.observations.csv`,
    /// and adopts the report's cells as verdicts.
    pub fn report(&mut self, stem: &str, report: &SweepReport) -> anyhow::Result<()> {
        self.json(&format!("{stem}.report.json"), "sweep_report", report)?;
        let mut cells = CsvTable::new(&["cell", "samples", "observed", "comparison", "threshold", "pass"]);
        for c in &report.cells {
            cells.push(vec![
                c.label.clone().into(),
                c.samples.into(),
                c.observed.into(),
                format!("{:?}", c.comparison).into(),
                c.threshold.into(),
                c.pass.into(),
            ])?;
            self.verdict(&report.name, &c.label, c.observed, &format!("{:?}", c.comparison), c.threshold, c.pass);
        }
        self.csv(&format!("{stem}.cells.csv"), cells)?;
        let mut obs = CsvTable::new(&SweepReport::COLUMNS);
        for o in &report.observations {
            obs.push(vec![o.cell.clone().into(), o.x.into(), o.y.into()])?;
        }
        self.csv(&format!("{stem}.observations.csv"), obs)?;
        self.flags
            .extend(report.flags.iter().map(|f| format!("{}: {f}", report.name)));
        Ok(())
    }

    /// Writes `run.json` and prints one line per verdict.
    pub fn finish(mut self) -> anyhow::Result<RunRecord> {
        let passed = self.verdicts.iter().all(|v| v.pass);
        self.record("run.json", "run_record");
        let record = RunRecord {
            config_hash: self.hash.clone(),
            code_version: CODE_VERSION.to_string(),
            experiment: self.config.experiment.clone(),
            seed: self.config.seed,
            started_unix: self.started,
            finished_unix: now(),
            files: self.files,
            verdicts: self.verdicts,
            flags: self.flags,
            passed,
        };
        write_json_atomic(&self.dir.join("run.json"), &record).context("cannot write run.json")?;
        for v in &record.verdicts {
            println!(
                "{} {}/{}: observed {:.6e} ({} {:e})",
                if v.pass { "PASS" } else { "FAIL" },
                v.name,
                v.cell,
                v.observed,
                v.comparison,
                v.threshold
            );
        }
        for f in &record.flags {
            println!("FLAG {f}");
        }
        println!("run record: {}", Path::new(&self.dir).join("run.json").display());
        Ok(record)
    }
}
