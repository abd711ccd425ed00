//! Command-line front end for the settleflow library.
//!
//! Exit codes: 0 on success, 1 on validation or IO failure, 2 on usage
//! errors (clap's default). Data goes to `--out` when given, otherwise to
//! stdout; progress summaries go to stderr.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use settleflow::csvio;
use settleflow::flows::{aggregate_flows, net_flows, FlowKind, FlowNetwork, NetFlowNetwork};
use settleflow::loans::{extract_loans, MatchParams};
use settleflow::model::{validate, BankId, MoneyValue, TargetRate, Transaction, WeekDataset};
use settleflow::report;
use settleflow::synth::{generate_week, GeneratorConfig};
use settleflow::viz::{export_dot, layout_fr, merge_others, Layout};

#[derive(Parser)]
#[command(name = "settleflow", version, about = "Interbank settlement log analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a transaction log and rewrite it in canonical order.
    Ingest(IngestArgs),
    /// Extract loans by reversing-pair matching; optionally score against truth.
    ExtractLoans(ExtractArgs),
    /// Tabulate per-day flow or net-flow networks as CSV.
    Flows(FlowsArgs),
    /// Value mixtures, imbalance correlations and network statistics as JSON.
    Stats(StatsArgs),
    /// Generate a labeled synthetic week.
    Simulate(SimulateArgs),
    /// Render one day's net flow network as a DOT graph.
    Render(RenderArgs),
    /// Run the full pipeline and emit the JSON report.
    Report(ReportArgs),
}

#[derive(Args)]
struct MatchFlags {
    /// Target annual loan rate, percent.
    #[arg(long, default_value_t = 6.25)]
    target_rate: f64,
    /// Accepted half-width around the target rate, percentage points.
    #[arg(long, default_value_t = 0.5)]
    rate_band: f64,
    /// Strict lower bound on first-leg value, in cents.
    #[arg(long, default_value_t = 20_000_000)]
    min_loan_value: i64,
    /// Longest loan term considered, in days.
    #[arg(long, default_value_t = 4)]
    max_term: usize,
}

impl MatchFlags {
    fn params(&self) -> Result<MatchParams> {
        let target_rate = TargetRate::new(self.target_rate)?;
        if !self.rate_band.is_finite() || self.rate_band <= 0.0 {
            bail!("--rate-band must be positive, got {}", self.rate_band);
        }
        if self.min_loan_value <= 0 {
            bail!("--min-loan-value must be positive cents, got {}", self.min_loan_value);
        }
        if self.max_term == 0 {
            bail!("--max-term must be at least 1 day");
        }
        Ok(MatchParams {
            target_rate,
            rate_band: self.rate_band,
            min_value: MoneyValue::from_cents(self.min_loan_value),
            max_term_days: self.max_term,
        })
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Input transaction CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Canonical CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Input transaction CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Loan CSV destination; omitted loans are not written.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Truth CSV to score precision and recall against.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    matching: MatchFlags,
}

#[derive(Args)]
struct FlowsArgs {
    /// Input transaction CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Flow table destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write net flows instead of raw directed flows.
    #[arg(long)]
    net: bool,
    /// Also write persistence, distance and baseline metrics as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Seed for the distance baseline.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    matching: MatchFlags,
}

#[derive(Args)]
struct StatsArgs {
    /// Input transaction CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for mixture fitting restarts.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    matching: MatchFlags,
}

#[derive(Args)]
struct SimulateArgs {
    /// Generator config as flat key = value lines; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Week CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Truth CSV destination for the generated loans.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Generator seed; overrides SETTLEFLOW_SEED and the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Loan,
    Nonloan,
}

#[derive(Args)]
struct RenderArgs {
    /// Input transaction CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// DOT destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Day index to render.
    #[arg(long, default_value_t = 0)]
    day: usize,
    /// Which transaction class to render.
    #[arg(long, value_enum, default_value_t = KindArg::Nonloan)]
    kind: KindArg,
    /// Comma-separated bank labels to keep; the rest merge into `others`.
    #[arg(long)]
    keep_nodes: Option<String>,
    /// Scale attraction by flow value during layout.
    #[arg(long)]
    weighted_layout: bool,
    /// Layout seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Force-directed iterations.
    #[arg(long, default_value_t = 300)]
    iterations: usize,
    #[command(flatten)]
    matching: MatchFlags,
}

#[derive(Args)]
struct ReportArgs {
    /// Input transaction CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for mixture fitting and the distance baseline.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    matching: MatchFlags,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => ingest(args),
        Command::ExtractLoans(args) => extract(args),
        Command::Flows(args) => flows_tables(args),
        Command::Stats(args) => stats(args),
        Command::Simulate(args) => simulate(args),
        Command::Render(args) => render(args),
        Command::Report(args) => full_report(args),
    }
}

/// `--seed` wins, then SETTLEFLOW_SEED, then `fallback` (config or zero).
fn resolve_seed(flag: Option<u64>, fallback: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Ok(text) = std::env::var("SETTLEFLOW_SEED") {
        return text
            .trim()
            .parse()
            .with_context(|| format!("SETTLEFLOW_SEED must be an unsigned integer, got {text:?}"));
    }
    Ok(fallback.unwrap_or(0))
}

fn read_week(path: &Path) -> Result<WeekDataset> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let week = csvio::parse_transactions(BufReader::new(file))
        .with_context(|| format!("cannot parse {}", path.display()))?;
    let violations = validate(&week);
    if let Some(first) = violations.first() {
        bail!("{} fails validation ({} problems): {first}", path.display(), violations.len());
    }
    Ok(week)
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes()).context("cannot write to stdout")
        }
    }
}

fn ingest(args: IngestArgs) -> Result<()> {
    let week = read_week(&args.input)?;
    write_text(args.out.as_deref(), &csvio::transactions_to_string(&week))?;
    eprintln!(
        "ok: {} days, {} transactions, {} banks",
        week.day_count(),
        week.transaction_count(),
        week.banks.len()
    );
    Ok(())
}

fn extract(args: ExtractArgs) -> Result<()> {
    let week = read_week(&args.input)?;
    let params = args.matching.params()?;
    let extraction = extract_loans(&week, &params);

    if let Some(out) = &args.out {
        write_text(Some(out), &csvio::loans_to_string(&extraction.loans))?;
    }

    let legs = |loans: &[settleflow::loans::Loan]| -> BTreeSet<(Transaction, Transaction)> {
        loans.iter().map(|l| (l.first_leg.clone(), l.second_leg.clone())).collect()
    };
    let extracted = legs(&extraction.loans);
    println!("loans={}", extracted.len());

    if let Some(truth_path) = &args.truth {
        let file = File::open(truth_path)
            .with_context(|| format!("cannot open {}", truth_path.display()))?;
        let truth_loans = csvio::parse_truth(BufReader::new(file))
            .with_context(|| format!("cannot parse {}", truth_path.display()))?;
        let truth = legs(&truth_loans);
        let matched = extracted.intersection(&truth).count();
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        println!(
            "precision={:.4} recall={:.4} matched={} extracted={} truth={}",
            ratio(matched, extracted.len()),
            ratio(matched, truth.len()),
            matched,
            extracted.len(),
            truth.len()
        );
    }
    Ok(())
}

/// Loan and nonloan flow networks for every day, in (day, kind) order.
fn split_networks(week: &WeekDataset, params: &MatchParams) -> Vec<FlowNetwork> {
    let extraction = extract_loans(week, params);
    let first_legs = extraction.first_legs_by_day(week.day_count());
    (0..week.day_count())
        .flat_map(|day| {
            [
                aggregate_flows(day, &first_legs[day], FlowKind::Loan),
                aggregate_flows(day, &extraction.residual.days[day], FlowKind::Nonloan),
            ]
        })
        .collect()
}

fn flows_tables(args: FlowsArgs) -> Result<()> {
    let week = read_week(&args.input)?;
    let params = args.matching.params()?;
    let networks = split_networks(&week, &params);
    let table = if args.net {
        let nets: Vec<NetFlowNetwork> = networks.iter().map(net_flows).collect();
        csvio::net_flows_to_string(&nets)
    } else {
        csvio::flows_to_string(&networks)
    };
    write_text(args.out.as_deref(), &table)?;

    if let Some(json_path) = &args.json {
        let seed = resolve_seed(args.seed, None)?;
        let extraction = extract_loans(&week, &params);
        let section = report::flow_section(&week, &extraction, seed, report::BASELINE_TRIALS);
        let mut text = serde_json::to_string_pretty(&section).context("serialize flow metrics")?;
        text.push('\n');
        write_text(Some(json_path), &text)?;
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    let week = read_week(&args.input)?;
    let params = args.matching.params()?;
    let seed = resolve_seed(args.seed, None)?;
    let extraction = extract_loans(&week, &params);
    let value = serde_json::json!({
        "schema_version": report::SCHEMA_VERSION,
        "seed": seed,
        "daily": report::daily_sections(&week, seed),
        "imbalances": report::imbalance_section(&week, &extraction),
        "networks": report::network_group(&week, &extraction, seed),
    });
    let mut text = serde_json::to_string_pretty(&value).context("serialize stats")?;
    text.push('\n');
    write_text(args.out.as_deref(), &text)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot open {}", path.display()))?;
            GeneratorConfig::from_key_values(&text)
                .with_context(|| format!("cannot parse {}", path.display()))?
        }
        None => GeneratorConfig::default(),
    };
    config.seed = resolve_seed(args.seed, Some(config.seed))?;

    let labeled = generate_week(&config)?;
    write_text(Some(&args.out), &csvio::transactions_to_string(&labeled.week))?;
    if let Some(truth_path) = &args.truth {
        write_text(Some(truth_path), &csvio::truth_to_string(&labeled.truth))?;
    }
    eprintln!(
        "generated {} days, {} transactions, {} truth loans, seed {}",
        labeled.week.day_count(),
        labeled.week.transaction_count(),
        labeled.truth.len(),
        config.seed
    );
    Ok(())
}

fn render(args: RenderArgs) -> Result<()> {
    let week = read_week(&args.input)?;
    if args.day >= week.day_count() {
        bail!("--day {} out of range, the input has {} days", args.day, week.day_count());
    }
    let params = args.matching.params()?;
    let extraction = extract_loans(&week, &params);
    let network = match args.kind {
        KindArg::Loan => {
            let legs = extraction.first_legs_by_day(week.day_count());
            aggregate_flows(args.day, &legs[args.day], FlowKind::Loan)
        }
        KindArg::Nonloan => {
            aggregate_flows(args.day, &extraction.residual.days[args.day], FlowKind::Nonloan)
        }
    };
    let mut network = net_flows(&network);

    if let Some(list) = &args.keep_nodes {
        let mut keep = BTreeSet::new();
        for label in list.split(',') {
            let bank = BankId::new(label.trim())
                .with_context(|| format!("bad --keep-nodes entry {label:?}"))?;
            if !week.banks.contains(&bank) {
                bail!("--keep-nodes bank {bank} does not appear in the input");
            }
            keep.insert(bank);
        }
        network = merge_others(&network, &keep);
    }

    let banks: BTreeSet<BankId> =
        network.net.keys().flat_map(|(s, d)| [s.clone(), d.clone()]).collect();
    let seed = resolve_seed(args.seed, None)?;
    let layout = if banks.is_empty() {
        Layout {
            positions: Default::default(),
            ideal_edge: 1.0,
            iterations: args.iterations,
            seed,
            weighted: args.weighted_layout,
        }
    } else {
        layout_fr(&banks, &network, args.weighted_layout, seed, args.iterations)
    };
    write_text(args.out.as_deref(), &export_dot(&network, &layout))
}

fn full_report(args: ReportArgs) -> Result<()> {
    let week = read_week(&args.input)?;
    let params = args.matching.params()?;
    let seed = resolve_seed(args.seed, None)?;
    let built = report::build_report(&week, &params, seed)?;
    write_text(args.out.as_deref(), &report::report_to_json(&built))
}
