//! `bench`: sweep a directory of instances with one or more engines.
//!
//! Subdirectories holding a `header.json` are estimation instances (engines
//! `l1`, `em`); `*.json` files are pricing instances (engines `dp`,
//! `dp-heur2`, `dp-heur5`, `oracle`). Engines that do not fit an instance
//! kind are skipped. The CSV columns are
//! `instance,engine,wall_s,objective,columns,termination`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use choicecg::cg::{run_estimation, CgConfig, Master};
use choicecg::io::{self, Instance, HEADER_FILE};
use choicecg::metrics::{srmse, SRMSE_MAX_N};
use choicecg::PricingInstance;
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::{run_engine, seconds, termination_name, Engine, Failure, Report};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchEngine {
    L1,
    Em,
    Dp,
    DpHeur2,
    DpHeur5,
    Oracle,
}

impl BenchEngine {
    fn name(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default()
    }

    fn pricing(self) -> Option<Engine> {
        match self {
            BenchEngine::L1 | BenchEngine::Em => None,
            BenchEngine::Dp => Some(Engine::Dp),
            BenchEngine::DpHeur2 => Some(Engine::DpHeur2),
            BenchEngine::DpHeur5 => Some(Engine::DpHeur5),
            BenchEngine::Oracle => Some(Engine::Oracle),
        }
    }
}

#[derive(Args)]
pub struct BenchArgs {
    /// Directory of instances.
    dir: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "l1,em,dp")]
    engines: Vec<BenchEngine>,
    /// Instances run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    eta_max: Option<usize>,
    /// Seconds per run.
    #[arg(long)]
    time_limit: Option<f64>,
    /// CSV path; defaults to `<out-dir>/bench.csv`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
struct Row {
    instance: String,
    engine: String,
    wall_s: f64,
    objective: Option<f64>,
    columns: Option<usize>,
    termination: String,
    #[serde(skip)]
    srmse: Option<f64>,
}

enum Kind {
    Estimation,
    Pricing,
}

/// Shifted geometric mean `(Π (x_i + σ))^{1/n} − σ`, computed in log space.
pub fn sgm(xs: &[f64], shift: f64) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mean_log = xs.iter().map(|x| (x + shift).ln()).sum::<f64>() / xs.len() as f64;
    Some(mean_log.exp() - shift)
}

fn discover(dir: &Path) -> Result<Vec<(String, PathBuf, Kind)>, Failure> {
    let mut found = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(|e| Failure::data(e.to_string()))?.path();
        let id = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if path.join(HEADER_FILE).is_file() {
            found.push((id, path, Kind::Estimation));
        } else if path.extension().is_some_and(|e| e == "json") && path.is_file() {
            found.push((id, path, Kind::Pricing));
        }
    }
    found.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(found)
}

fn failed(id: &str, engine: BenchEngine, wall: f64) -> Row {
    Row {
        instance: id.to_owned(),
        engine: engine.name(),
        wall_s: wall,
        objective: None,
        columns: None,
        termination: "error".into(),
        srmse: None,
    }
}

fn run_one(id: &str, path: &Path, kind: &Kind, engine: BenchEngine, args: &BenchArgs) -> Row {
    let start = Instant::now();
    let limit = seconds(args.time_limit).ok().flatten();
    match (kind, engine.pricing()) {
        (Kind::Pricing, Some(e)) => {
            let Ok(inst) = io::read_json::<PricingInstance>(path) else {
                return failed(id, engine, 0.0);
            };
            match run_engine(&inst, e, limit) {
                Ok(r) => Row {
                    instance: id.to_owned(),
                    engine: engine.name(),
                    wall_s: start.elapsed().as_secs_f64(),
                    objective: Some(r.best_profit),
                    columns: None,
                    termination: if r.timed_out { "time_limit" } else { "converged" }.into(),
                    srmse: None,
                },
                Err(_) => failed(id, engine, start.elapsed().as_secs_f64()),
            }
        }
        (Kind::Estimation, None) => {
            let Ok(inst) = Instance::read(path) else {
                return failed(id, engine, 0.0);
            };
            let cfg = CgConfig {
                master: if engine == BenchEngine::Em { Master::Em } else { Master::L1 },
                eta_max: args.eta_max,
                time_limit: limit,
                ..CgConfig::default()
            };
            match run_estimation(&inst.train, inst.n, &cfg) {
                Ok((model, report)) => {
                    let srmse = inst
                        .ground_truth
                        .as_ref()
                        .filter(|_| inst.n <= SRMSE_MAX_N)
                        .and_then(|t| srmse(&model, t, inst.n).ok());
                    Row {
                        instance: id.to_owned(),
                        engine: engine.name(),
                        wall_s: report.wall_time,
                        objective: Some(report.final_objective),
                        columns: Some(model.types().len()),
                        termination: termination_name(report.termination),
                        srmse,
                    }
                }
                Err(_) => failed(id, engine, start.elapsed().as_secs_f64()),
            }
        }
        _ => unreachable!("filtered by kind"),
    }
}

pub fn run(out_dir: &Path, args: BenchArgs) -> Result<Report, Failure> {
    if args.jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    seconds(args.time_limit)?;
    let instances = discover(&args.dir)?;
    let mut tasks = Vec::new();
    for (id, path, kind) in &instances {
        for &engine in &args.engines {
            if matches!(kind, Kind::Pricing) == engine.pricing().is_some() {
                tasks.push((id, path, kind, engine));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Failure::data(e.to_string()))?;
    let rows: Vec<Row> = pool.install(|| {
        tasks.par_iter().map(|(id, path, kind, engine)| run_one(id, path, kind, *engine, &args)).collect()
    });

    let csv_path = args.output.clone().unwrap_or_else(|| out_dir.join("bench.csv"));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Failure::data(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Failure::data(e.to_string()))?;
    }
    w.flush().map_err(|e| Failure::data(e.to_string()))?;

    let mut by_engine: BTreeMap<String, Vec<&Row>> = BTreeMap::new();
    for r in &rows {
        by_engine.entry(r.engine.clone()).or_default().push(r);
    }
    let mut engines = serde_json::Map::new();
    let mut summary = vec![format!("{} runs over {} instances, CSV in {}", rows.len(), instances.len(), csv_path.display())];
    for (name, rs) in &by_engine {
        let walls: Vec<f64> = rs.iter().map(|r| r.wall_s).collect();
        let errors: Vec<f64> = rs.iter().filter_map(|r| r.srmse).collect();
        let wall = sgm(&walls, 1.0);
        let err = sgm(&errors, 0.01);
        let failures = rs.iter().filter(|r| r.termination == "error").count();
        engines.insert(
            name.clone(),
            json!({ "runs": rs.len(), "errors": failures, "sgm_wall_s": wall, "sgm_srmse": err }),
        );
        summary.push(format!(
            "{name}: {} runs, shifted geometric mean time {:.3} s{}",
            rs.len(),
            wall.unwrap_or(0.0),
            err.map_or(String::new(), |e| format!(", SRMSE {e:.4}"))
        ));
    }
    let json = json!({ "csv": csv_path, "runs": rows.len(), "instances": instances.len(), "engines": engines });
    Ok(Report::ok(json, summary))
}

#[cfg(test)]
mod tests {
    use super::sgm;

    #[test]
    fn shifted_geometric_mean() {
        assert_eq!(sgm(&[], 1.0), None);
        assert!((sgm(&[3.0], 1.0).unwrap() - 3.0).abs() < 1e-12);
        // (2 * 8)^(1/2) - 1 = 3
        assert!((sgm(&[1.0, 7.0], 1.0).unwrap() - 3.0).abs() < 1e-12);
        assert!((sgm(&[0.0, 0.0], 0.01).unwrap()).abs() < 1e-12);
    }
}
