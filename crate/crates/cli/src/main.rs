//! `choicecg` command-line tool.
//!
//! Every command prints one JSON line followed by a short human summary.
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 time limit.

mod bench;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use choicecg::assortment::{
    aao_ratio, optimize_assortment, population_from_model, build_probit_population, simulate_revenue_stats,
    ProbitPopulation,
};
use choicecg::cg::{run_estimation, CgConfig, Master, Termination};
use choicecg::datagen::{generate, Family, GenSpec, ProbitParams, Scale};
use choicecg::io::{self, Instance};
use choicecg::metrics::{hrmse_with, mrmse, srmse_with, SrmseOptions, SRMSE_MAX_N};
use choicecg::pricing::{LabelingSolver, PricingConfig};
use choicecg::{brute_force_glop, OracleConfig, PricingInstance, PricingResult, ProductSet};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "choicecg", version, about = "Estimate ranked-list choice models by column generation")]
struct Cli {
    /// Default directory for files written without an explicit path.
    #[arg(long, global = true, env = "CHOICECG_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance directory.
    Generate(GenerateArgs),
    /// Estimate a choice model from an instance's training log.
    Estimate(EstimateArgs),
    /// Solve a standalone pricing instance.
    Price(PriceArgs),
    /// Score a model against an instance's ground truth and test log.
    Evaluate(EvaluateArgs),
    /// Find the revenue-maximizing assortment under a model.
    Assort(AssortArgs),
    /// Monte Carlo revenue of an offer set over a consumer population.
    Simulate(SimulateArgs),
    /// Run engines over a directory of instances and write a CSV.
    Bench(bench::BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accept parameters outside the published grid.
    #[arg(long)]
    custom: bool,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    eta_max: Option<usize>,
    #[arg(long)]
    periods: Option<usize>,
    #[arg(long)]
    arrivals: Option<usize>,
    #[arg(long)]
    pd: Option<f64>,
    #[arg(long)]
    swaps: Option<usize>,
    #[arg(long)]
    transactions: Option<usize>,
    #[arg(long)]
    strong_substitution: bool,
    #[arg(long)]
    arrival_prob: Option<f64>,
    /// Output directory; defaults to `<out-dir>/<family>-<seed>`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MasterArg {
    Em,
    L1,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct EstimateArgs {
    /// Instance directory.
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "l1")]
    master: MasterArg,
    #[arg(long)]
    eta_max: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long, value_enum, default_value = "on")]
    heuristic: Toggle,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    max_columns: Option<usize>,
    /// Level of the likelihood-ratio test (EM master).
    #[arg(long)]
    alpha: Option<f64>,
    /// Record per-iteration EM trace entries in the report.
    #[arg(long)]
    trace: bool,
    /// Model file; defaults to `<out-dir>/model.json`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Dp,
    DpHeur2,
    DpHeur5,
    Oracle,
}

#[derive(Args)]
struct PriceArgs {
    /// Pricing instance JSON file.
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "dp")]
    engine: Engine,
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Instance directory.
    instance: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Bundle-size cap for SRMSE and HRMSE.
    #[arg(long)]
    eta: Option<usize>,
}

#[derive(Args)]
struct AssortArgs {
    #[arg(long)]
    model: PathBuf,
    /// Instance directory supplying revenues and, if present, the ground truth.
    instance: Option<PathBuf>,
    /// JSON array of unit revenues (overrides the instance's).
    #[arg(long)]
    revenues: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Consumer population (JSON Lines).
    #[arg(long, conflicts_with_all = ["params", "model"])]
    population: Option<PathBuf>,
    /// Probit parameters to draw a population from.
    #[arg(long, conflicts_with = "model")]
    params: Option<PathBuf>,
    /// Choice model to draw a population from.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Products offered, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    offer: Vec<u64>,
    /// JSON array of unit revenues; defaults to the probit prices.
    #[arg(long)]
    revenues: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    consumers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the drawn population here.
    #[arg(long)]
    save_population: Option<PathBuf>,
}

/// A failed command and its exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure { code: 2, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Failure { code: 3, message: msg.into() }
    }
}

impl From<choicecg::Error> for Failure {
    fn from(e: choicecg::Error) -> Self {
        match e {
            choicecg::Error::InvalidInput(_) => Failure::usage(e.to_string()),
            _ => Failure::data(e.to_string()),
        }
    }
}

/// What a command prints: a JSON record, summary lines and the exit code.
pub struct Report {
    json: Value,
    summary: Vec<String>,
    code: u8,
}

impl Report {
    fn ok(json: Value, summary: Vec<String>) -> Self {
        Report { json, summary, code: 0 }
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: choicecg::Error| e.to_string())
}

pub fn seconds(limit: Option<f64>) -> Result<Option<Duration>, Failure> {
    limit
        .map(|s| Duration::try_from_secs_f64(s).map_err(|_| Failure::usage(format!("bad time limit {s}"))))
        .transpose()
}

/// Reading `path` failed: always a data error, prefixed with the path.
fn at<T>(path: &Path, r: choicecg::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn read_revenues(path: &Path) -> Result<Vec<f64>, Failure> {
    at(path, io::read_json(path))
}

fn offer_set(ids: &[u64]) -> Result<ProductSet, Failure> {
    if ids.contains(&0) {
        return Err(Failure::usage("product ids start at 1"));
    }
    Ok(ProductSet::try_from_ids(ids)?)
}

fn generate_cmd(out_dir: &Path, a: GenerateArgs) -> Result<Report, Failure> {
    let base = GenSpec::new(a.family, a.seed);
    let spec = GenSpec {
        scale: if a.custom { Scale::Custom } else { Scale::Published },
        n: a.n.unwrap_or(base.n),
        k: a.k.unwrap_or(base.k),
        p1: a.p1.unwrap_or(base.p1),
        eta_max: a.eta_max.unwrap_or(base.eta_max),
        periods: a.periods.unwrap_or(base.periods),
        arrivals_per_period: a.arrivals.unwrap_or(base.arrivals_per_period),
        pd: a.pd.unwrap_or(base.pd),
        swaps: a.swaps.unwrap_or(base.swaps),
        transactions: a.transactions.unwrap_or(base.transactions),
        strong_substitution: a.strong_substitution,
        arrival_prob: a.arrival_prob.unwrap_or(base.arrival_prob),
        ..base
    };
    let g = generate(&spec)?;
    let dir = a.output.unwrap_or_else(|| out_dir.join(format!("{}-{}", spec.family, spec.seed)));
    g.write(&dir).map_err(|e| Failure::data(e.to_string()))?;
    let test = g.instance.test.as_ref().map_or(0, |t| t.len());
    let json = json!({
        "dir": dir,
        "family": spec.family,
        "seed": spec.seed,
        "n": g.instance.n,
        "train": g.instance.train.len(),
        "no_arrival_periods": g.instance.train.no_arrival_periods,
        "test": test,
        "truth_types": g.instance.ground_truth.as_ref().map(|m| m.types().len()),
    });
    let summary = vec![format!(
        "generated {} (seed {}) in {}: {} training and {} test transactions over {} products",
        spec.family,
        spec.seed,
        dir.display(),
        g.instance.train.len(),
        test,
        g.instance.n
    )];
    Ok(Report::ok(json, summary))
}

pub fn termination_name(t: Termination) -> String {
    serde_json::to_value(t).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn estimate_cmd(out_dir: &Path, a: EstimateArgs) -> Result<Report, Failure> {
    let inst = at(&a.instance, Instance::read(&a.instance))?;
    let mut cfg = CgConfig {
        master: match a.master {
            MasterArg::Em => Master::Em,
            MasterArg::L1 => Master::L1,
        },
        eta_max: a.eta_max,
        q: a.q,
        time_limit: seconds(a.time_limit)?,
        max_columns: a.max_columns,
        trace: a.trace,
        ..CgConfig::default()
    };
    if a.heuristic == Toggle::Off {
        cfg.heuristic_caps.clear();
        cfg.use_heuristic_lb_seed = false;
    }
    if let Some(alpha) = a.alpha {
        cfg.em.alpha = alpha;
    }
    let (model, report) = run_estimation(&inst.train, inst.n, &cfg)?;
    let path = a.output.unwrap_or_else(|| out_dir.join("model.json"));
    io::write_model(&path, &model).map_err(|e| Failure::data(e.to_string()))?;
    let summary = vec![
        format!("wrote {} types to {}", model.types().len(), path.display()),
        format!(
            "{} iterations, {} columns added, objective {:.6}, {} in {:.2} s",
            report.iterations,
            report.columns_added,
            report.final_objective,
            termination_name(report.termination),
            report.wall_time
        ),
    ];
    let code = if report.termination == Termination::TimeLimit { 4 } else { 0 };
    let json = json!({ "model": path, "types": model.types().len(), "lambda": model.lambda(), "report": report });
    Ok(Report { json, summary, code })
}

/// Runs one pricing engine.
pub fn run_engine(inst: &PricingInstance, engine: Engine, limit: Option<Duration>) -> Result<PricingResult, Failure> {
    let cap = match engine {
        Engine::Oracle => return Ok(brute_force_glop(inst, OracleConfig::default())?),
        Engine::Dp => None,
        Engine::DpHeur2 => Some(2),
        Engine::DpHeur5 => Some(5),
    };
    let cfg = PricingConfig { bucket_cap: cap, time_limit: limit, ..PricingConfig::default() };
    Ok(LabelingSolver::new(inst, cfg).solve(None)?)
}

fn price_cmd(a: PriceArgs) -> Result<Report, Failure> {
    let inst: PricingInstance = at(&a.instance, io::read_json(&a.instance))?;
    let r = run_engine(&inst, a.engine, seconds(a.time_limit)?)?;
    let engine = a.engine.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default();
    let summary = vec![format!(
        "{engine}: best profit {:.9} with sigma {:?} eta {}, {} labels, {:.3} s{}",
        r.best_profit,
        r.best_type.sigma(),
        r.best_type.eta(),
        r.labels_generated,
        r.wall_time,
        if r.timed_out { " (time limit reached)" } else { "" }
    )];
    let code = if r.timed_out { 4 } else { 0 };
    let mut json = serde_json::to_value(&r).map_err(|e| Failure::data(e.to_string()))?;
    json["engine"] = json!(engine);
    Ok(Report { json, summary, code })
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<Report, Failure> {
    let inst = at(&a.instance, Instance::read(&a.instance))?;
    let model = at(&a.model, io::read_model(&a.model))?;
    if model.max_product() > inst.n {
        return Err(Failure::data(format!("model references product {} beyond n = {}", model.max_product(), inst.n)));
    }
    let srmse = match &inst.ground_truth {
        Some(truth) if inst.n <= SRMSE_MAX_N => {
            Some(srmse_with(&model, truth, inst.n, SrmseOptions { eta: a.eta, ..SrmseOptions::default() })?)
        }
        _ => None,
    };
    let test = inst.test.as_ref().filter(|t| !t.is_empty());
    let hrmse = test.map(|t| hrmse_with(&model, t, a.eta)).transpose()?;
    let mrmse = test.map(|t| mrmse(&model, t)).transpose()?;
    let show = |v: Option<f64>| v.map_or("n/a".to_owned(), |x| format!("{x:.6}"));
    let summary = vec![format!("SRMSE {}  HRMSE {}  MRMSE {}", show(srmse), show(hrmse), show(mrmse))];
    Ok(Report::ok(json!({ "srmse": srmse, "hrmse": hrmse, "mrmse": mrmse }), summary))
}

fn assort_cmd(a: AssortArgs) -> Result<Report, Failure> {
    let model = at(&a.model, io::read_model(&a.model))?;
    let inst = a.instance.as_deref().map(|p| at(p, Instance::read(p))).transpose()?;
    let revenues = match (&a.revenues, &inst) {
        (Some(p), _) => read_revenues(p)?,
        (None, Some(i)) => i.revenues.clone().ok_or_else(|| Failure::data("instance has no revenues.json"))?,
        (None, None) => return Err(Failure::usage("need --revenues or an instance directory")),
    };
    let n = revenues.len();
    if model.max_product() > n {
        return Err(Failure::data(format!("model references product {} beyond the {n} revenues", model.max_product())));
    }
    let (best, value) = optimize_assortment(&model, &revenues, n)?;
    let aao = match inst.as_ref().and_then(|i| i.ground_truth.as_ref()) {
        Some(truth) => Some(aao_ratio(&model, truth, &revenues, n)?),
        None => None,
    };
    let mut summary = vec![format!("best assortment {:?} with expected revenue {value:.6}", best.to_vec())];
    if let Some(r) = aao {
        summary.push(format!("AAO ratio against the ground truth: {r:.4}"));
    }
    Ok(Report::ok(json!({ "assortment": best, "expected_revenue": value, "aao": aao }), summary))
}

fn simulate_cmd(a: SimulateArgs) -> Result<Report, Failure> {
    let params: Option<ProbitParams> = a.params.as_deref().map(|p| at(p, io::read_json(p))).transpose()?;
    let revenues = match (&a.revenues, &params) {
        (Some(p), _) => read_revenues(p)?,
        (None, Some(p)) => p.revenue.clone(),
        (None, None) => return Err(Failure::usage("need --revenues unless --params supplies prices")),
    };
    let pop = if let Some(p) = &a.population {
        at(p, ProbitPopulation::read_jsonl(p))?
    } else if let Some(p) = &params {
        build_probit_population(p, a.consumers, a.seed)?
    } else if let Some(m) = &a.model {
        population_from_model(&at(m, io::read_model(m))?, revenues.len(), a.consumers, a.seed)?
    } else {
        return Err(Failure::usage("need one of --population, --params or --model"));
    };
    if let Some(path) = &a.save_population {
        pop.write_jsonl(path)?;
    }
    let offer = offer_set(&a.offer)?;
    let est = simulate_revenue_stats(&pop, offer, &revenues)?;
    let summary = vec![format!(
        "mean revenue {:.6} (standard error {:.6}) over {} consumers for offer {:?}",
        est.mean,
        est.std_error(),
        est.consumers,
        offer.to_vec()
    )];
    let json = json!({
        "offer": offer,
        "mean": est.mean,
        "variance": est.variance,
        "std_error": est.std_error(),
        "consumers": est.consumers,
    });
    Ok(Report::ok(json, summary))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out_dir;
    let result = match cli.command {
        Command::Generate(a) => generate_cmd(&out, a),
        Command::Estimate(a) => estimate_cmd(&out, a),
        Command::Price(a) => price_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Assort(a) => assort_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Bench(a) => bench::run(&out, a),
    };
    match result {
        Ok(r) => {
            println!("{}", r.json);
            for line in r.summary {
                println!("{line}");
            }
            ExitCode::from(r.code)
        }
        Err(f) => {
            println!("{}", json!({ "error": f.message, "exit_code": f.code }));
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
