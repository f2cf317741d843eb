use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pricequake_core::calibration::{fit, residual_diagnostic, ReplayData, DEFAULT_HISTOGRAM_BINS};
use pricequake_core::detector::{detect, QuakeKind};
use pricequake_core::engine::{Engine, EventOutcome, SimulationOptions};
use pricequake_core::market::build_calendar;
use pricequake_core::ofc::{default_warmup, run_ofc_with_warmup, OfcLattice};
use pricequake_core::stats::summarize;

use crate::config::{read_grid, read_params, read_registry, ParamsFile};
use crate::dataset::{ingest, to_event_returns};
use crate::output::{
    create, read_outcomes, read_records, write_outcomes, write_prices, write_raster, write_records, write_reports,
    write_summary, OutcomesHeader, RecordSet, RecordsHeader,
};

#[derive(Debug, Parser)]
#[command(name = "pricequake", version, about = "Simulate, replay and analyse price-quakes between stock exchanges")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the model forward and write outcomes, quake records and reports for both kinds.
    Simulate(SimulateArgs),
    /// Drive the model with observed prices and analyse the resulting quakes.
    Replay(ReplayArgs),
    /// Maximum-likelihood fit of gamma, tau and R_C on observed prices.
    Calibrate(CalibrateArgs),
    /// Detect quakes of one kind in an outcomes file.
    Detect(DetectArgs),
    /// Tables and distributions from a records file.
    Report(ReportArgs),
    /// Olami-Feder-Christensen reference run; writes one avalanche size per line.
    Ofc(OfcArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Sipq,
    Cipq,
}

impl From<KindArg> for QuakeKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Sipq => QuakeKind::Sipq,
            KindArg::Cipq => QuakeKind::Cipq,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub exchanges: PathBuf,
    /// Trading days to simulate, warm-up included.
    #[arg(long)]
    pub days: u32,
    /// Overrides the seed in the parameter file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the warm-up length in the parameter file.
    #[arg(long)]
    pub warmup_days: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Directory with one price file per exchange.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    /// Registry; defaults to `exchanges.csv` inside the data directory.
    #[arg(long)]
    pub exchanges: Option<PathBuf>,
    /// Leading trading days replayed but left out of the quake statistics.
    #[arg(long, default_value_t = 0)]
    pub warmup_days: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub exchanges: Option<PathBuf>,
    /// Seed written into the fitted parameter file.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub outcomes: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OfcArgs {
    #[arg(long)]
    pub side: usize,
    /// Share of a toppling site's force given to each neighbour.
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub avalanches: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Discarded avalanches; defaults to ten per site.
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Replay(a) => replay(&a),
        Command::Calibrate(a) => calibrate(&a),
        Command::Detect(a) => {
            let (header, outcomes) = read_outcomes(&a.outcomes)?;
            detect_into(&a.out, &header, &outcomes, a.kind.into()).map(drop)
        }
        Command::Report(a) => write_reports(&a.out, &read_records(&a.records)?),
        Command::Ofc(a) => ofc(&a),
    }
}

/// Detects one kind, keeps what falls after the warm-up and writes
/// `records.jsonl` and `raster.csv` into `dir`.
pub fn detect_into(dir: &Path, header: &OutcomesHeader, outcomes: &[EventOutcome], kind: QuakeKind) -> Result<RecordSet> {
    let d = detect(outcomes, header.threshold, kind).measured_from(header.measure_from_group);
    let set = RecordSet {
        header: RecordsHeader {
            kind,
            exchanges: header.exchanges.clone(),
            threshold: header.threshold,
            measure_from_group: header.measure_from_group,
        },
        quakes: d.quakes,
        nodes: d.nodes,
    };
    let start = outcomes.partition_point(|o| o.event.group < header.measure_from_group);
    write_records(&dir.join("records.jsonl"), &set)?;
    write_raster(&dir.join("raster.csv"), &header.exchanges, &outcomes[start..], &set.nodes)?;
    Ok(set)
}

/// Both kinds into `<out>/sipq` and `<out>/cipq`, plus the combined summary.
fn analyse(out: &Path, header: &OutcomesHeader, outcomes: &[EventOutcome]) -> Result<()> {
    let mut all = Vec::new();
    for (kind, name) in [(QuakeKind::Sipq, "sipq"), (QuakeKind::Cipq, "cipq")] {
        let dir = out.join(name);
        let set = detect_into(&dir, header, outcomes, kind)?;
        write_reports(&dir, &set)?;
        all.extend(set.quakes);
    }
    write_summary(&out.join("summary.csv"), &summarize(&all), &[QuakeKind::Sipq, QuakeKind::Cipq])
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let file = read_params(&a.params)?;
    let mut params = file.model_params()?;
    if let Some(seed) = a.seed {
        params.seed = seed;
    }
    let exchanges = read_registry(&a.exchanges)?;
    if let Some(s) = &file.sigmas {
        if s.len() != exchanges.len() {
            bail!("sigmas has {} entries for {} exchanges", s.len(), exchanges.len());
        }
    }
    let calendar = build_calendar(&exchanges, a.days)?;
    let engine = Engine::with_zone_distance(&exchanges, params, file.zone_distance())?;
    let options = SimulationOptions {
        warmup_days: a.warmup_days.unwrap_or_else(|| file.warmup_days()),
        noise_sds: file.sigmas.clone(),
        initial: None,
    };
    let run = engine.simulate(&calendar, &options)?;
    let header = OutcomesHeader {
        exchanges: exchanges.iter().map(|e| e.name.clone()).collect(),
        threshold: params.threshold,
        measure_from_group: run.measure_from_group,
    };
    write_outcomes(&a.out.join("outcomes.jsonl"), &header, &run.outcomes)?;
    write_prices(&a.out.join("prices.csv"), &header.exchanges, &run.prices)?;
    analyse(&a.out, &header, &run.outcomes)?;
    println!(
        "simulated {} events ({} in warm-up) into {}",
        run.outcomes.len(),
        run.warmup_events,
        a.out.display()
    );
    Ok(())
}

fn load_returns(data: &Path, exchanges: Option<&Path>) -> Result<crate::dataset::EventReturns> {
    let registry_path = exchanges.map_or_else(|| data.join("exchanges.csv"), Path::to_path_buf);
    let registry = read_registry(&registry_path)?;
    let ingested = ingest(data, &registry)?;
    for w in &ingested.warnings {
        eprintln!("warning: {w}");
    }
    to_event_returns(&ingested.dataset)
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let file = read_params(&a.params)?;
    let params = file.model_params()?;
    let returns = load_returns(&a.data, a.exchanges.as_deref())?;
    let engine = Engine::with_zone_distance(&returns.exchanges, params, file.zone_distance())?;
    let run = engine.replay(&returns.calendar, &returns.observed)?;
    let first_measured = returns.calendar.events_before_day(a.warmup_days);
    let measure_from_group = returns
        .calendar
        .events()
        .nth(first_measured)
        .map_or(returns.calendar.group_count(), |e| e.group);
    let header = OutcomesHeader {
        exchanges: returns.exchanges.iter().map(|e| e.name.clone()).collect(),
        threshold: params.threshold,
        measure_from_group,
    };
    let mut w = csv::Writer::from_writer(create(&a.out.join("calendar.csv"))?);
    w.write_record(["day", "date"])?;
    for (k, d) in returns.dates.iter().enumerate() {
        w.write_record([k.to_string(), d.to_string()])?;
    }
    w.flush()?;
    write_outcomes(&a.out.join("outcomes.jsonl"), &header, &run.outcomes)?;
    analyse(&a.out, &header, &run.outcomes)?;
    println!("replayed {} events into {}", run.outcomes.len(), a.out.display());
    Ok(())
}

fn calibrate(a: &CalibrateArgs) -> Result<()> {
    let grid = read_grid(&a.grid)?;
    let returns = load_returns(&a.data, a.exchanges.as_deref())?;
    let mut data = ReplayData::new(&returns.calendar, &returns.observed, &returns.exchanges);
    if grid.circular_time_zones {
        data.zone_distance = pricequake_core::market::ZoneDistance::Circular;
    }
    let result = fit(&data, &grid.search_space(), a.seed)?;

    let mut w = create(&a.out.join("calibration.json"))?;
    serde_json::to_writer_pretty(&mut w, &result)?;
    w.write_all(b"\n")?;
    w.flush()?;

    // Histogram of the best candidate's returns, coupling terms and residuals.
    let pairs = data.residuals(&result.params)?;
    let returns_seen = data.observed_values();
    let coupling: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let residuals: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diag = residual_diagnostic(&returns_seen, &coupling, &residuals, DEFAULT_HISTOGRAM_BINS);
    let mut w = csv::Writer::from_writer(create(&a.out.join("histogram.csv"))?);
    w.write_record(["bin", "count_returns", "count_coupling", "count_residual"])?;
    for b in &diag.histogram {
        w.write_record([
            b.center().to_string(),
            b.count_returns.to_string(),
            b.count_coupling.to_string(),
            b.count_residual.to_string(),
        ])?;
    }
    w.flush()?;

    let mut fitted = ParamsFile::from_params(&result.params);
    fitted.circular_time_zones = grid.circular_time_zones;
    fs::write(a.out.join("params.toml"), toml::to_string(&fitted)?).context("writing fitted parameters")?;
    println!(
        "gamma = {}, tau = {}, r_c = {}, sigma2 = {}, log-likelihood = {}",
        result.params.cap_scale,
        result.params.zone_scale,
        result.params.threshold,
        result.params.noise_variance(),
        result.log_likelihood
    );
    Ok(())
}

fn ofc(a: &OfcArgs) -> Result<()> {
    let mut lattice = OfcLattice::random(a.side, 1.0, a.alpha, a.seed)?;
    let warmup = a.warmup.unwrap_or_else(|| default_warmup(a.side));
    let sizes = run_ofc_with_warmup(&mut lattice, a.avalanches, warmup)?;
    let mut w = create(&a.out)?;
    for s in sizes {
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    Ok(())
}
