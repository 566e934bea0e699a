use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hiding_core::harness::{
    run_experiment, write_csv, write_json, write_records, ConfigValue, ExperimentConfig, Format, EXPERIMENTS,
};
use hiding_core::Error;

/// Run a registered experiment and write its records as CSV or JSON.
#[derive(Debug, Parser)]
#[command(name = "hiding", version)]
struct Cli {
    /// Experiment name; see --list.
    #[arg(required_unless_present = "list")]
    experiment: Option<String>,

    /// List the registered experiments and their defaults.
    #[arg(long)]
    list: bool,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    #[arg(long)]
    samples: Option<usize>,

    #[arg(long)]
    trials: Option<usize>,

    /// Output file; records go to stdout as CSV/JSON when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, default_value = "csv")]
    format: Format,

    #[arg(long = "M")]
    big_m: Option<usize>,

    #[arg(long = "N")]
    big_n: Option<usize>,

    #[arg(long = "K")]
    big_k: Option<usize>,

    #[arg(long)]
    p: Option<usize>,

    #[arg(long)]
    q: Option<usize>,

    #[arg(long, allow_negative_numbers = true)]
    r: Option<f64>,

    /// Sweep values, comma separated.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,

    /// TOML file of `key = value` defaults; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Write wall_time_ms as 0 so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parameter(format!("config {}: {e}", path.display())))
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::new(),
    };
    let counts = [
        ("samples", cli.samples),
        ("trials", cli.trials),
        ("M", cli.big_m),
        ("N", cli.big_n),
        ("K", cli.big_k),
        ("p", cli.p),
        ("q", cli.q),
    ];
    for (key, v) in counts {
        if let Some(v) = v {
            cfg.insert(key.to_string(), ConfigValue::Number(v as f64));
        }
    }
    if let Some(r) = cli.r {
        cfg.insert("r".into(), ConfigValue::Number(r));
    }
    if let Some(g) = &cli.grid {
        cfg.insert("grid".into(), ConfigValue::List(g.clone()));
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    if cli.list {
        for (name, defaults) in EXPERIMENTS {
            println!("{name:<18} {defaults}");
        }
        return Ok(());
    }
    let name = cli.experiment.as_deref().expect("clap enforces the positional");
    let cfg = build_config(cli)?;
    log::info!("running {name} with seed {} and config {cfg:?}", cli.seed);
    let mut records = run_experiment(name, &cfg, cli.seed)?;
    if cli.no_timing {
        for r in &mut records {
            r.wall_time_ms = 0.0;
        }
    }
    match &cli.out {
        Some(path) => {
            write_records(&records, path, cli.format)?;
            log::info!("wrote {} records to {}", records.len(), path.display());
        }
        None => match cli.format {
            Format::Csv => write_csv(&records, std::io::stdout().lock())?,
            Format::Json => write_json(&records, std::io::stdout().lock())?,
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit 1 like other precondition failures; 2 is reserved
    // for numerical invariant failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Invariant(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
