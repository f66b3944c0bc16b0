//! Command line: `prep`, `fit`, `generate`, `experiment` and `serve`.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};
use geosample_core::config::RunConfig;
use geosample_core::domain::schema::{sidecar_schema_path, write_village_csv};
use geosample_core::domain::{load_village_with_schema, CovariateSet, HouseStatus, VillageFrame};
use geosample_core::inference::{sample_posterior, FitReport, ModelVariant, Observed};
use geosample_core::sim::{generate_village, run_on_villages_resuming, summarize, RunOutcome, RunResult};
use log::info;
use serde::Serialize;

use crate::error::{ServiceError, ServiceResult};
use crate::http::router;
use crate::service::Service;
use crate::store::Store;

#[derive(Debug, Parser)]
#[command(
    name = "geosample",
    version,
    about = "Adaptive geostatistical sampling of households"
)]
pub struct Cli {
    /// Master random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a village CSV and print the derived covariates and design matrix.
    Prep(PrepArgs),
    /// Fit the model variants to a surveyed village.
    Fit(FitArgs),
    /// Write synthetic villages with ground truth.
    Generate(GenerateArgs),
    /// Run the replicated adaptive-versus-random experiment.
    Experiment(ExperimentArgs),
    /// Serve live campaigns over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CovsetArg {
    Global,
    All,
}

impl From<CovsetArg> for CovariateSet {
    fn from(c: CovsetArg) -> Self {
        match c {
            CovsetArg::Global => CovariateSet::Global,
            CovsetArg::All => CovariateSet::All,
        }
    }
}

#[derive(Debug, Args)]
pub struct VillageArgs {
    /// Village CSV.
    #[arg(long)]
    pub village: PathBuf,
    /// Covariate schema; defaults to the `<stem>.schema.json` sidecar when present.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "global")]
    pub covset: CovsetArg,
}

impl VillageArgs {
    fn load(&self) -> ServiceResult<VillageFrame> {
        let sidecar = sidecar_schema_path(&self.village);
        let schema = self.schema.clone().or_else(|| sidecar.exists().then_some(sidecar));
        Ok(load_village_with_schema(
            &self.village,
            schema.as_deref(),
            self.covset.into(),
        )?)
    }
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[command(flatten)]
    pub village: VillageArgs,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Full,
    SpatialOnly,
    IidOnly,
    /// Every variant.
    All,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub village: VillageArgs,
    #[arg(long, value_enum, default_value = "all")]
    pub variant: VariantArg,
    /// Posterior draws for the summaries; defaults to the design's Monte Carlo size.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Villages to write, by name; all configured villages when absent.
    #[arg(long = "name")]
    pub names: Vec<String>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Fill the status column from the ground truth, as after a full survey.
    #[arg(long)]
    pub surveyed: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, default_value = "experiment")]
    pub out_dir: PathBuf,
    /// Overrides the configured replication count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Overrides the configured worker count; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Keep runs already recorded in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, default_value = "campaigns")]
    pub data_dir: PathBuf,
}

fn write_output(path: Option<&Path>, text: &str) -> ServiceResult<()> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> ServiceResult<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> ServiceError {
    ServiceError::internal("io", format!("{}: {e}", path.display())).with_field("path")
}

fn to_json<T: Serialize>(value: &T) -> ServiceResult<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn load_config(path: Option<&Path>) -> ServiceResult<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::read(p).map_err(|e| ServiceError::from(e).with_field("config"))?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Parses arguments and runs the command.
pub fn run(cli: Cli) -> ServiceResult<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Prep(a) => prep(&a),
        Command::Fit(a) => fit(&a, &cfg, cli.seed.unwrap_or(cfg.design.seed)),
        Command::Generate(a) => generate(&a, &cfg, cli.seed),
        Command::Experiment(a) => experiment(&a, &cfg, cli.seed.unwrap_or(0)),
        Command::Serve(a) => serve(&a, cli.seed),
    }
}

fn prep(a: &PrepArgs) -> ServiceResult<()> {
    let frame = a.village.load()?;
    write_output(a.out.as_deref(), &to_json(&frame.export())?)
}

#[derive(Debug, Serialize)]
pub struct FitOutput {
    pub village: String,
    pub reports: Vec<FitReport>,
}

fn fit(a: &FitArgs, cfg: &RunConfig, seed: u64) -> ServiceResult<()> {
    let frame = a.village.load()?;
    let observed = Observed::from_status(&frame);
    if observed.is_empty() {
        return Err(
            ServiceError::invalid("empty_design", "the village has no infested or clear houses").with_field("status"),
        );
    }
    let variants = match a.variant {
        VariantArg::Full => vec![ModelVariant::Full],
        VariantArg::SpatialOnly => vec![ModelVariant::SpatialOnly],
        VariantArg::IidOnly => vec![ModelVariant::IidOnly],
        VariantArg::All => ModelVariant::ALL.to_vec(),
    };
    let draws = a.draws.unwrap_or(cfg.design.mc_draws);
    let mut reports = Vec::new();
    for variant in variants {
        let mut model = cfg.model;
        model.variant = variant;
        let fit = model.fit(&frame, &observed, None)?;
        let samples = sample_posterior(&fit, draws, seed)?;
        reports.push(FitReport::build(&fit, &samples)?);
    }
    let out = FitOutput {
        village: a.village.village.display().to_string(),
        reports,
    };
    write_output(a.out.as_deref(), &to_json(&out)?)
}

fn generate(a: &GenerateArgs, cfg: &RunConfig, seed: Option<u64>) -> ServiceResult<()> {
    let villages = &cfg.experiment.villages;
    let chosen: Vec<_> = if a.names.is_empty() {
        villages.iter().collect()
    } else {
        a.names
            .iter()
            .map(|name| {
                villages.iter().find(|v| &v.name == name).ok_or_else(|| {
                    ServiceError::invalid("unknown_village", format!("no configured village {name:?}"))
                        .with_field("name")
                })
            })
            .collect::<ServiceResult<_>>()?
    };
    fs::create_dir_all(&a.out_dir).map_err(|e| io_error(&a.out_dir, e))?;
    for (k, v) in chosen.into_iter().enumerate() {
        let mut gen = v.clone();
        if let Some(s) = seed {
            gen.seed = geosample_core::rng::derive_seed(s, &[k as u64]);
        }
        let mut village = generate_village(&gen)?;
        if a.surveyed {
            for h in &mut village.houses {
                h.status = HouseStatus::from_infested(h.true_status == Some(true));
            }
        }
        let csv_path = a.out_dir.join(format!("{}.csv", village.name));
        write_file(&csv_path, &write_village_csv(&village.houses, &village.schema)?)?;
        let schema_path = sidecar_schema_path(&csv_path);
        village.schema.write(&schema_path)?;
        info!(
            "wrote {} ({} houses, rate {:.3})",
            csv_path.display(),
            village.houses.len(),
            village.realized_rate()
        );
    }
    Ok(())
}

pub const RUNS_LOG: &str = "runs.jsonl";

fn read_previous(path: &Path) -> ServiceResult<Vec<RunResult>> {
    let Ok(file) = fs::File::open(path) else {
        return Ok(vec![]);
    };
    let mut done = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        // an interrupted write leaves a torn last line
        if let Ok(RunOutcome::Done(r)) = serde_json::from_str::<RunOutcome>(&line) {
            done.push(r);
        }
    }
    Ok(done)
}

fn experiment(a: &ExperimentArgs, cfg: &RunConfig, seed: u64) -> ServiceResult<()> {
    let mut exp = cfg.experiment.clone();
    if let Some(r) = a.reps {
        exp.reps = r;
    }
    if let Some(w) = a.workers {
        exp.workers = w;
    }
    fs::create_dir_all(&a.out_dir).map_err(|e| io_error(&a.out_dir, e))?;
    let log_path = a.out_dir.join(RUNS_LOG);
    let previous = if a.resume { read_previous(&log_path)? } else { vec![] };
    // rewriting drops a torn tail and failed runs, which are retried
    let mut kept = String::new();
    for r in &previous {
        kept.push_str(&serde_json::to_string(&RunOutcome::Done(r.clone()))?);
        kept.push('\n');
    }
    write_file(&log_path, &kept)?;
    let villages = exp
        .villages
        .iter()
        .map(generate_village)
        .collect::<Result<Vec<_>, _>>()?;
    info!("{} runs, {} already recorded", exp.run_count(), previous.len());

    let log = Mutex::new(
        OpenOptions::new()
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(|e| io_error(&log_path, e))?,
    );
    let finished = Mutex::new(previous.len());
    let total = exp.run_count();
    let sink = |outcome: &RunOutcome| {
        let line = serde_json::to_string(outcome).expect("outcome serializes");
        let mut f = log.lock().expect("log lock");
        if let Err(e) = writeln!(f, "{line}") {
            log::warn!("could not record a run: {e}");
        }
        let mut k = finished.lock().expect("counter lock");
        *k += 1;
        info!("{}/{} runs", *k, total);
    };
    let result = run_on_villages_resuming(&villages, &exp, &cfg.design, &cfg.model, seed, &previous, &sink)?;
    let summary = summarize(&result)?;
    write_file(&a.out_dir.join("results.csv"), &result.to_csv()?)?;
    write_file(&a.out_dir.join("results.json"), &to_json(&result)?)?;
    write_file(&a.out_dir.join("summary.json"), &to_json(&summary)?)?;
    write_file(&a.out_dir.join("plot.csv"), &summary.plot_csv())?;
    let counts: HashMap<&str, usize> = [("runs", result.runs.len()), ("failures", result.failures.len())].into();
    println!("{}", serde_json::to_string(&counts)?);
    Ok(())
}

fn serve(a: &ServeArgs, seed: Option<u64>) -> ServiceResult<()> {
    let store = Store::open(&a.data_dir, true)?;
    let service = Arc::new(Service::open(store, seed)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&a.addr)
            .await
            .map_err(|e| ServiceError::internal("bind", format!("{}: {e}", a.addr)).with_field("addr"))?;
        info!("serving {} campaigns on http://{}", service.ids().len(), a.addr);
        axum::serve(listener, router(service))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
