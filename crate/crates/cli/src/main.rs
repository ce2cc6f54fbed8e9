//! `valuator`: value, report, sensitivity, stability, backtest and batch.
//!
//! Exit codes: 0 success, 2 data or configuration error, 3 LLM backend
//! error, 4 invariant violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use valuation_core::config::RunConfig;
use valuation_core::fundamentals::load_fundamentals;
use valuation_core::orchestrator::{initialize_inputs, run_full_valuation, FixedClock, RunOptions};
use valuation_core::store::{backtest, batch, stability_report, PerturbationMode, RunRecord, RunStore};
use valuation_core::valuation::{sensitivity_grid, value, Axis, SensitivityTable, ValuationInputs, ValuationResult};
use valuation_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "valuator", version, about = "Agentic free-cash-flow valuation")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Pin the run clock to the end of this day (YYYY-MM-DD).
    #[arg(long, global = true)]
    clock: Option<NaiveDate>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the agents and print the valuation summary.
    Value {
        ticker: String,
        #[arg(long)]
        as_of: Option<NaiveDate>,
        /// Value the base anchors only, without any agent.
        #[arg(long)]
        base: bool,
    },
    /// Full pipeline: agents, report, persisted run record.
    Report {
        ticker: String,
        #[arg(long)]
        as_of: Option<NaiveDate>,
    },
    /// Two-driver scenario table.
    Sensitivity {
        ticker: String,
        #[arg(long)]
        as_of: Option<NaiveDate>,
        /// Row axis, e.g. `terminal_margin=0.05,0.07,0.09`.
        #[arg(long)]
        rows: String,
        /// Column axis, e.g. `cost_of_capital=0.08,0.09,0.10`.
        #[arg(long)]
        cols: String,
        /// Use the final inputs of a stored run instead of the base anchors.
        #[arg(long)]
        run: Option<String>,
    },
    /// Repeat the pipeline and report value dispersion and decision flips.
    Stability {
        ticker: String,
        #[arg(long)]
        as_of: Option<NaiveDate>,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, value_enum, default_value_t = Mode::None)]
        mode: Mode,
        /// Template directory for `paraphrase-templates`; repeat for several.
        #[arg(long = "templates")]
        templates: Vec<PathBuf>,
        /// Sampling temperature for `temperature`.
        #[arg(long, default_value_t = 0.7)]
        temperature: f64,
    },
    /// One run per date listed in FILE, clock pinned to each date.
    Backtest {
        ticker: String,
        #[arg(long)]
        dates: PathBuf,
    },
    /// Full pipeline for every ticker listed in FILE, concurrently.
    Batch {
        #[arg(long)]
        tickers: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    None,
    ParaphraseTemplates,
    Temperature,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn options(clock: Option<NaiveDate>) -> RunOptions {
    let mut opts = RunOptions::default();
    if let Some(day) = clock {
        opts.clock = Arc::new(FixedClock::end_of(day));
    }
    opts
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn parse_axis(spec: &str) -> Result<Axis> {
    let (driver, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("axis `{spec}` must look like DRIVER=a,b,c")))?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("axis `{spec}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Axis::new(driver.trim(), values))
}

fn base_inputs(cfg: &RunConfig, opts: &RunOptions, ticker: &str, as_of: Option<NaiveDate>) -> Result<ValuationInputs> {
    let provider = opts.registry.resolve(&cfg.data.source)?;
    let today = opts.clock.now().date_naive();
    let snapshot = load_fundamentals(provider.as_ref(), ticker, as_of, today)?;
    Ok(initialize_inputs(&snapshot, &cfg.macro_inputs)?)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable output"));
}

fn print_result(inputs: &ValuationInputs, v: &ValuationResult) {
    let ccy = &inputs.identity.listing_currency;
    println!("{} ({})", inputs.identity.name, inputs.identity.ticker);
    println!("  enterprise value  {:>16.2} {ccy}", v.enterprise_value);
    println!("  equity value      {:>16.2} {ccy}", v.equity_value);
    println!("  value per share   {:>16.2} {ccy}", v.value_per_share);
    println!("  market price      {:>16.2} {ccy}", inputs.financials.market_price);
    println!("  price / value     {:>16.3}", v.price_to_value);
    match v.terminal_ev_to_ebitda {
        Some(m) => println!("  terminal EV/EBITDA{:>16.2}x", m),
        None => println!("  terminal EV/EBITDA{:>16}", "n/a"),
    }
}

fn print_record(r: &RunRecord) {
    print_result(&r.final_inputs, &r.final_value);
    if let Some(d) = r.decision {
        println!("  decision          {:>16}", d.to_string());
    }
    println!("  rounds            {:>16}", r.transcript.len());
    println!("  termination       {:>16}", r.termination_cause.to_string());
    println!("  run id            {}", r.run_id);
    for w in &r.warnings {
        println!("  warning: {w}");
    }
}

fn print_table(t: &SensitivityTable) {
    let label = format!("{} \\ {}", t.row_axis.driver, t.col_axis.driver);
    let w = label.len().max(12);
    print!("{label:>w$}");
    for c in &t.col_axis.values {
        print!("{c:>12.4}");
    }
    println!();
    for (r, line) in t.row_axis.values.iter().zip(&t.cells) {
        print!("{r:>w$.4}");
        for v in line {
            print!("{v:>12.2}");
        }
        println!();
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let opts = options(cli.clock);
    match cli.command {
        Command::Value { ticker, as_of, base } => {
            if base {
                let inputs = base_inputs(&cfg, &opts, &ticker, as_of)?;
                let v = value(&inputs)?;
                if cli.json {
                    print_json(&v);
                } else {
                    print_result(&inputs, &v);
                }
            } else {
                let opts = RunOptions { write_report: false, persist: false, ..opts };
                let r = run_full_valuation(&ticker, as_of, &cfg, &opts)?;
                if cli.json {
                    print_json(&r.final_value);
                } else {
                    print_record(&r);
                }
            }
        }
        Command::Report { ticker, as_of } => {
            let r = run_full_valuation(&ticker, as_of, &cfg, &opts)?;
            if cli.json {
                print_json(&r);
            } else {
                print_record(&r);
                if let Some(p) = &r.report_paths {
                    println!("  report            {}", p.report);
                    println!("  manifest          {}", p.manifest);
                    println!("  verdict           {:?}", p.verdict);
                }
                println!("  record            {}", cfg.paths.runs_dir.join(&r.run_id).join("record.json").display());
            }
        }
        Command::Sensitivity { ticker, as_of, rows, cols, run } => {
            let inputs = match run {
                Some(id) => RunStore::new(&cfg.paths.runs_dir).load(&id)?.final_inputs,
                None => base_inputs(&cfg, &opts, &ticker, as_of)?,
            };
            let table = sensitivity_grid(&inputs, &parse_axis(&rows)?, &parse_axis(&cols)?)?;
            if cli.json {
                print_json(&table);
            } else {
                print_table(&table);
            }
        }
        Command::Stability { ticker, as_of, n, mode, templates, temperature } => {
            let mode = match mode {
                Mode::None => PerturbationMode::None,
                Mode::ParaphraseTemplates => PerturbationMode::ParaphraseTemplates { dirs: templates },
                Mode::Temperature => PerturbationMode::Temperature { value: temperature },
            };
            let m = stability_report(&ticker, as_of, n, &mode, &cfg, &opts)?;
            if cli.json {
                print_json(&m);
            } else {
                println!("runs              {}", m.n_runs);
                println!("value mean        {:.4}", m.value_mean);
                println!("value std         {:.4}", m.value_std);
                println!("dispersion        {:.6}", m.dispersion);
                println!("decision flips    {:.4}", m.decision_flip_rate);
                let d: Vec<String> = m.decisions.iter().map(ToString::to_string).collect();
                println!("decisions         {}", d.join(" "));
            }
        }
        Command::Backtest { ticker, dates } => {
            let dates = read_lines(&dates)?
                .iter()
                .map(|d| d.parse::<NaiveDate>().map_err(|e| Error::Config(format!("date `{d}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let report = backtest(&ticker, &dates, &cfg, &opts)?;
            if cli.json {
                print_json(&report);
            } else {
                println!("{:<12}{:>12}{:>12}  {:<6}run id", "date", "value", "price", "call");
                for row in &report.rows {
                    println!(
                        "{:<12}{:>12.2}{:>12.2}  {:<6}{}",
                        row.date.to_string(),
                        row.value_per_share,
                        row.market_price,
                        row.decision.to_string(),
                        row.run_id
                    );
                }
                for (date, note) in &report.skipped {
                    println!("{:<12}skipped: {note}", date.to_string());
                }
            }
        }
        Command::Batch { tickers } => {
            let tickers = read_lines(&tickers)?;
            let results = batch(&tickers, &cfg, &opts);
            let mut first_error = None;
            for (ticker, result) in results {
                match result {
                    Ok(r) => println!(
                        "{ticker:<8}{:>12.2}{:>12.2}  {:<6}{}",
                        r.final_value.value_per_share,
                        r.final_inputs.financials.market_price,
                        r.decision.map(|d| d.to_string()).unwrap_or_default(),
                        r.run_id
                    ),
                    Err(e) => {
                        println!("{ticker:<8}error: {e}");
                        first_error.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_error {
                return Err(e);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
