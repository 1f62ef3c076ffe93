use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use odflow::pipeline::{
    exit_code, run_pipeline, stage_aggregate, stage_chain, stage_evaluate, stage_generate,
    stage_solve, Config,
};
use odflow::Error;

/// Transit O-D estimation from trip segments.
#[derive(Parser)]
#[command(name = "odflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic network, transactions and transfer rates.
    Generate(Common),
    /// Chain transactions into segments and true transfers.
    Chain(Common),
    /// Identify transfers and write the stop-level O-D matrix.
    Solve(Common),
    /// Aggregate the stop-level matrix onto every configured zone map.
    Aggregate(Common),
    /// Score the estimate against the chained truth.
    Evaluate(Common),
    /// All of the above in order.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Walking distance limit for transfers, in metres.
    #[arg(long)]
    max_walk_m: Option<f64>,
    /// Waiting time limit for transfers, in minutes.
    #[arg(long)]
    max_transfer_min: Option<f64>,
    /// Comma-separated TAC cut heights in metres.
    #[arg(long, value_delimiter = ',')]
    tac_cut_heights: Option<Vec<f64>>,
    /// Comma-separated TAC radii in metres (cut height is twice the radius).
    #[arg(long, value_delimiter = ',')]
    tac_radius: Option<Vec<f64>>,
}

impl Common {
    fn load(&self) -> Result<Config, Error> {
        let mut cfg = Config::load(&self.config)?;
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(v) = self.max_walk_m {
            cfg.feasibility.max_walk_m = v;
        }
        if let Some(v) = self.max_transfer_min {
            cfg.feasibility.max_transfer_min = v;
        }
        if let Some(v) = &self.tac_cut_heights {
            cfg.evaluation.tac_cut_heights = v.clone();
        }
        if let Some(v) = &self.tac_radius {
            cfg.evaluation.tac_radii = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cmd: &Command) -> Result<(), Error> {
    let (common, stage) = match cmd {
        Command::Generate(c) => (c, "generate"),
        Command::Chain(c) => (c, "chain"),
        Command::Solve(c) => (c, "solve"),
        Command::Aggregate(c) => (c, "aggregate"),
        Command::Evaluate(c) => (c, "evaluate"),
        Command::Run(c) => (c, "run"),
    };
    let cfg = common.load()?;
    match stage {
        "generate" => stage_generate(&cfg),
        "chain" => {
            let dropped = stage_chain(&cfg)?;
            eprintln!("chained transactions; dropped {dropped} card-days");
            Ok(())
        }
        "solve" => {
            let s = stage_solve(&cfg)?;
            eprint!("{}", s.report.to_kv());
            Ok(())
        }
        "aggregate" => stage_aggregate(&cfg),
        "evaluate" => stage_evaluate(&cfg),
        _ => {
            let s = run_pipeline(&cfg)?;
            eprint!("{}", s.solve.report.to_kv());
            if let Some(d) = s.dropped_cards {
                eprintln!("dropped_cards = {d}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
