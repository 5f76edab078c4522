use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use ranvar::models::{beta_bernoulli, conjugate_normal, logistic_regression, ZooEntry};
use ranvar_cli::{
    bench_nuts, load_csv, run_demo, synth_data, BenchConfig, CliError, CsvOptions, Dataset, LabelRule, Mode,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Model {
    Logistic,
    BetaBernoulli,
    ConjugateNormal,
}

/// Time NUTS leapfrog steps on a traced log joint and its handwritten twin,
/// or run a demo.
#[derive(Debug, Parser)]
#[command(name = "ranvar", version)]
struct Args {
    #[arg(long, value_enum, default_value = "logistic")]
    model: Model,
    /// CSV of numeric rows: features plus one label column.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Synthetic logistic data as N,D.
    #[arg(long, value_parser = parse_shape, default_value = "5000,54")]
    synthetic: (usize, usize),
    /// Zero-based label column; defaults to the last.
    #[arg(long)]
    label_column: Option<usize>,
    /// eq:V, gt:V, or binary.
    #[arg(long, default_value = "binary")]
    label_rule: LabelRule,
    #[arg(long)]
    has_header: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    trajectories: usize,
    #[arg(long, default_value_t = 200)]
    warmup: usize,
    /// Post-warmup draws per chain; defaults to the trajectory count.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = 10)]
    max_tree_depth: u32,
    #[arg(long, default_value_t = 0.8)]
    target_accept: f64,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run a demo instead of the benchmark.
    #[arg(long)]
    demo: Option<String>,
}

fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (n, d) = s.split_once(',').ok_or("expected N,D")?;
    let n = n.trim().parse().map_err(|_| format!("bad N in {s:?}"))?;
    let d = d.trim().parse().map_err(|_| format!("bad D in {s:?}"))?;
    Ok((n, d))
}

fn emit(text: &str, output: &Option<PathBuf>) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(args: Args) -> Result<ExitCode, CliError> {
    if let Some(name) = &args.demo {
        let value = run_demo(name, args.seed)?;
        emit(&serde_json::to_string_pretty(&value).expect("json"), &args.output)?;
        return Ok(ExitCode::SUCCESS);
    }
    let cfg = BenchConfig {
        model: format!("{:?}", args.model).to_lowercase(),
        mode: args.mode,
        trajectories: args.trajectories,
        samples: args.samples.unwrap_or(args.trajectories),
        warmup: args.warmup,
        chains: args.chains,
        seed: args.seed,
        max_tree_depth: args.max_tree_depth,
        target_accept: args.target_accept,
    };
    let report = match args.model {
        Model::Logistic => {
            let data: Arc<Dataset> = Arc::new(match &args.data {
                Some(path) => {
                    let opts = CsvOptions {
                        label_column: args.label_column,
                        rule: args.label_rule,
                        has_header: args.has_header,
                        standardize: true,
                    };
                    load_csv(path, &opts)?
                }
                None => synth_data(args.synthetic.0, args.synthetic.1, args.seed)?,
            });
            bench_nuts(|| logistic_regression(data.features.clone(), &data.labels), &cfg)?
        }
        Model::BetaBernoulli => bench_nuts(|| Ok::<ZooEntry, _>(beta_bernoulli()), &cfg)?,
        Model::ConjugateNormal => bench_nuts(|| Ok::<ZooEntry, _>(conjugate_normal()), &cfg)?,
    };
    emit(&report.to_json(), &args.output)?;
    if report.divergence_storm {
        log::error!("more than half of the post-warmup iterations diverged");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
