//! Seeded experiment runner: computational effort, paired PSO vs RA-PSO
//! comparisons and DOF sweeps, with results persisted as JSON and CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kinematics::{DesignLimits, DhLink};
use crate::optimize::{
    convergence_index, run_design_optimization, Algorithm, DesignObjective, DesignSpace, HistoryEntry,
    OptimizationResult, PsoConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effort {
    /// Generations until convergence.
    pub w: usize,
    /// Mean valid-particle count over those generations.
    pub mean_valid: f64,
    pub ce: f64,
}

/// `CE = mean_valid * W`, with `W` the convergence point of the best
/// fitness (or the whole history if it never settles).
pub fn computational_effort(history: &[HistoryEntry], stall: usize, tolerance: f64) -> Effort {
    let w = convergence_index(history, stall, tolerance).map_or(history.len(), |i| i + 1);
    let mean_valid = if w == 0 {
        0.0
    } else {
        history[..w].iter().map(|h| h.n_valid as f64).sum::<f64>() / w as f64
    };
    Effort {
        w,
        mean_valid,
        ce: mean_valid * w as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub n: usize,
    /// Angular period; `None` for the standard swarm.
    pub d: Option<usize>,
    /// Best combined fitness, `None` if no valid design was found.
    pub combined: Option<f64>,
    pub path_fitness_mm: Option<f64>,
    pub area_mm: Option<f64>,
    pub w: usize,
    pub mean_valid: f64,
    pub ce: f64,
    pub evaluations: usize,
    pub config_hash: String,
}

impl RunRecord {
    pub fn from_result(result: &OptimizationResult, cfg: &PsoConfig, config_hash: &str) -> Self {
        let effort = computational_effort(&result.history, cfg.stall_iterations, cfg.tolerance);
        let report = result.best.as_ref().map(|b| &b.report);
        Self {
            algorithm: result.algorithm,
            seed: result.seed,
            n: result.dof,
            d: (result.algorithm == Algorithm::RaPso).then_some(cfg.angular_period),
            combined: result.best.as_ref().map(|b| b.fitness),
            path_fitness_mm: report.map(|r| r.path_fitness * 1e3),
            area_mm: report.map(|r| r.area * 1e3),
            w: effort.w,
            mean_valid: effort.mean_valid,
            ce: effort.ce,
            evaluations: result.evaluations,
            config_hash: config_hash.to_string(),
        }
    }

    pub fn file_name(&self) -> String {
        match self.d {
            Some(d) => format!("{}_n{}_D{}_seed{}.json", self.algorithm, self.n, d, self.seed),
            None => format!("{}_n{}_seed{}.json", self.algorithm, self.n, self.seed),
        }
    }
}

/// Short SHA-256 fingerprint of any serialisable configuration.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
}

/// Write `bytes` to `path` through a sibling temporary file and a rename,
/// refusing to replace an existing file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("{} already exists", path.display()),
        )));
    }
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.partial", std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Median of the finite values, `None` if there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    })
}

/// `100 * (new - base) / base`; negative means `new` is lower.
pub fn improvement_pct(base: f64, new: f64) -> Option<f64> {
    (base != 0.0 && base.is_finite() && new.is_finite()).then(|| 100.0 * (new - base) / base)
}

/// Shared settings of an experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub cfg: PsoConfig,
    pub limits: DesignLimits,
    pub tool: Option<DhLink>,
    pub seeds: Vec<u64>,
    /// Concurrent runs; 0 uses the global thread pool.
    pub workers: usize,
    /// Caller-supplied fingerprint of the task and fitness settings.
    pub fingerprint: String,
}

impl Experiment {
    fn hash(&self, extra: &impl Serialize) -> Result<String> {
        config_hash(&(&self.cfg, &self.limits, &self.tool, &self.fingerprint, extra))
    }

    fn install<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T> {
        if self.workers == 0 {
            return Ok(job());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(pool.install(job))
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    n: usize,
    algorithm: Algorithm,
    d: usize,
    seed: u64,
}

fn run_jobs<O: DesignObjective + ?Sized>(
    objective: &O,
    exp: &Experiment,
    jobs: &[Job],
    config_hash: &str,
) -> Result<Vec<RunRecord>> {
    exp.install(|| {
        jobs.par_iter()
            .map(|job| {
                let space = DesignSpace::new(job.n, exp.limits, exp.tool)?;
                let cfg = PsoConfig {
                    angular_period: job.d,
                    ..exp.cfg
                };
                let result = run_design_optimization(objective, &space, &cfg, job.algorithm, job.seed)?;
                Ok(RunRecord::from_result(&result, &cfg, config_hash))
            })
            .collect::<Result<Vec<_>>>()
    })?
}

fn persist_records(records: &[RunRecord], dir: &Path) -> Result<()> {
    for r in records {
        write_atomic(&dir.join("runs").join(r.file_name()), &serde_json::to_vec_pretty(r)?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub d: usize,
    pub pso_fitness: Option<f64>,
    pub rapso_fitness: Option<f64>,
    pub fitness_improvement_pct: Option<f64>,
    pub pso_ce: Option<f64>,
    pub rapso_ce: Option<f64>,
    pub ce_improvement_pct: Option<f64>,
    pub pso_failures: usize,
    pub rapso_failures: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub records: Vec<RunRecord>,
}

impl ComparisonTable {
    /// Per-D mean of the improvements over all `n`.
    pub fn mean_row(&self) -> Vec<(usize, Option<f64>, Option<f64>)> {
        let mut ds: Vec<usize> = self.rows.iter().map(|r| r.d).collect();
        ds.sort_unstable();
        ds.dedup();
        let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        ds.into_iter()
            .map(|d| {
                let rows = self.rows.iter().filter(|r| r.d == d);
                let fit = mean(rows.clone().filter_map(|r| r.fitness_improvement_pct).collect());
                let ce = mean(rows.filter_map(|r| r.ce_improvement_pct).collect());
                (d, fit, ce)
            })
            .collect()
    }

    /// Rows sorted by `(n, D)` followed by a mean row per D (`n` = "mean").
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "n",
            "D",
            "pso_fitness",
            "rapso_fitness",
            "fitness_improvement_pct",
            "pso_ce",
            "rapso_ce",
            "ce_improvement_pct",
            "pso_failures",
            "rapso_failures",
            "config_hash",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.d.to_string(),
                opt(r.pso_fitness),
                opt(r.rapso_fitness),
                opt(r.fitness_improvement_pct),
                opt(r.pso_ce),
                opt(r.rapso_ce),
                opt(r.ce_improvement_pct),
                r.pso_failures.to_string(),
                r.rapso_failures.to_string(),
                r.config_hash.clone(),
            ])?;
        }
        let hash = self.rows.first().map(|r| r.config_hash.clone()).unwrap_or_default();
        for (d, fit, ce) in self.mean_row() {
            w.write_record([
                "mean".to_string(),
                d.to_string(),
                String::new(),
                String::new(),
                opt(fit),
                String::new(),
                String::new(),
                opt(ce),
                String::new(),
                String::new(),
                hash.clone(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Run the standard swarm once per `(n, seed)` and RA-PSO once per
/// `(n, D, seed)` on the same objective, then aggregate paired medians.
/// Runs without a valid design are kept in `records` but left out of the
/// medians. With `out_dir`, every record and the table are persisted.
pub fn compare_algorithms<O: DesignObjective + ?Sized>(
    objective: &O,
    exp: &Experiment,
    ns: &[usize],
    ds: &[usize],
    out_dir: Option<&Path>,
) -> Result<ComparisonTable> {
    if exp.seeds.len() < 2 {
        return Err(Error::InvalidArgument("a comparison needs at least two seeds".into()));
    }
    if ns.is_empty() || ds.is_empty() || ds.contains(&0) {
        return Err(Error::InvalidArgument("need at least one n and one positive D".into()));
    }
    let hash = exp.hash(&(ns, ds))?;
    let mut jobs = Vec::new();
    for &n in ns {
        for &seed in &exp.seeds {
            jobs.push(Job {
                n,
                algorithm: Algorithm::Pso,
                d: exp.cfg.angular_period,
                seed,
            });
            for &d in ds {
                jobs.push(Job {
                    n,
                    algorithm: Algorithm::RaPso,
                    d,
                    seed,
                });
            }
        }
    }
    let records = run_jobs(objective, exp, &jobs, &hash)?;

    let mut rows = Vec::new();
    for &n in ns {
        let pso: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.n == n && r.algorithm == Algorithm::Pso)
            .collect();
        let pso_ok: Vec<&&RunRecord> = pso.iter().filter(|r| r.combined.is_some()).collect();
        let pso_fitness = median(pso_ok.iter().filter_map(|r| r.combined));
        let pso_ce = median(pso_ok.iter().map(|r| r.ce));
        for &d in ds {
            let ra: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.n == n && r.algorithm == Algorithm::RaPso && r.d == Some(d))
                .collect();
            let ra_ok: Vec<&&RunRecord> = ra.iter().filter(|r| r.combined.is_some()).collect();
            let rapso_fitness = median(ra_ok.iter().filter_map(|r| r.combined));
            let rapso_ce = median(ra_ok.iter().map(|r| r.ce));
            rows.push(ComparisonRow {
                n,
                d,
                pso_fitness,
                rapso_fitness,
                fitness_improvement_pct: pso_fitness.zip(rapso_fitness).and_then(|(a, b)| improvement_pct(a, b)),
                pso_ce,
                rapso_ce,
                ce_improvement_pct: pso_ce.zip(rapso_ce).and_then(|(a, b)| improvement_pct(a, b)),
                pso_failures: pso.len() - pso_ok.len(),
                rapso_failures: ra.len() - ra_ok.len(),
                config_hash: hash.clone(),
            });
        }
    }
    let table = ComparisonTable { rows, records };
    if let Some(dir) = out_dir {
        persist_records(&table.records, dir)?;
        write_atomic(&dir.join("comparison.csv"), table.to_csv()?.as_bytes())?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub median_combined: Option<f64>,
    pub median_path_fitness_mm: Option<f64>,
    pub median_area_mm: Option<f64>,
    pub runs: usize,
    pub failures: usize,
    pub config_hash: String,
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Best fitness per DOF, one row per `n` in ascending order.
pub fn sweep_dof<O: DesignObjective + ?Sized>(
    objective: &O,
    exp: &Experiment,
    algorithm: Algorithm,
    ns: &[usize],
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    if ns.is_empty() || exp.seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one n and one seed".into()));
    }
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let hash = exp.hash(&(&ns, algorithm))?;
    let jobs: Vec<Job> = ns
        .iter()
        .flat_map(|&n| {
            exp.seeds.iter().map(move |&seed| Job {
                n,
                algorithm,
                d: exp.cfg.angular_period,
                seed,
            })
        })
        .collect();
    let records = run_jobs(objective, exp, &jobs, &hash)?;
    let rows: Vec<SweepRow> = ns
        .iter()
        .map(|&n| {
            let runs: Vec<&RunRecord> = records.iter().filter(|r| r.n == n).collect();
            SweepRow {
                n,
                median_combined: median(runs.iter().filter_map(|r| r.combined)),
                median_path_fitness_mm: median(runs.iter().filter_map(|r| r.path_fitness_mm)),
                median_area_mm: median(runs.iter().filter_map(|r| r.area_mm)),
                runs: runs.len(),
                failures: runs.iter().filter(|r| r.combined.is_none()).count(),
                config_hash: hash.clone(),
            }
        })
        .collect();
    if let Some(dir) = out_dir {
        persist_records(&records, dir)?;
        write_atomic(&dir.join("sweep_dof.csv"), sweep_to_csv(&rows)?.as_bytes())?;
    }
    Ok(rows)
}

/// Default results directory for a run label.
pub fn results_dir(root: &Path, label: &str) -> PathBuf {
    root.join(label)
}
