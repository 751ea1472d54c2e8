mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Invariant;

/// Repeat-consumption analysis and next-day recommendation for food diaries.
#[derive(Debug, Parser)]
#[command(name = "repeatrec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean an event file and apply p-core filtering.
    Ingest(Common),
    /// Repeat-consumption statistics and group comparisons.
    Analyze(Common),
    /// Sliding-window evaluation of the recommenders.
    Evaluate(Common),
    /// Draw a synthetic event log from a known mixture.
    Synth(Common),
    /// Run the oracle comparisons and the EM recovery check.
    Selftest(Common),
}

/// Flags shared by every command. Each one overrides the config key of the
/// same name; flags a command does not use are ignored.
#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    events: Option<String>,
    #[arg(long)]
    profiles: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Repeat window length in days.
    #[arg(long)]
    k: Option<String>,
    /// forward or backward.
    #[arg(long)]
    direction: Option<String>,
    /// Comma-separated decay rates, e.g. 0.5,0.75,1.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Comma-separated methods: mixture, mixture_tw, global, personal.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated cutoffs.
    #[arg(long)]
    top_n: Option<String>,
    /// Comma-separated: all, breakfast, lunch, dinner, snack.
    #[arg(long)]
    meal: Option<String>,
    /// Comma-separated grouping keys for breakdowns.
    #[arg(long)]
    group_by: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<String>,
}

impl Common {
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("events", self.events.clone()),
            ("profiles", self.profiles.clone()),
            ("out", self.out.clone()),
            ("k", self.k.clone()),
            ("direction", self.direction.clone()),
            ("lambda_grid", self.lambda_grid.clone()),
            ("methods", self.methods.clone()),
            ("top_n", self.top_n.clone()),
            ("meal", self.meal.clone()),
            ("group_by", self.group_by.clone()),
            ("seed", self.seed.clone()),
            ("jobs", self.jobs.clone()),
        ]
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let invariant = err.chain().any(|c| {
        c.is::<Invariant>() || matches!(c.downcast_ref(), Some(repeatrec::eval::EvalError::InvalidSession { .. }))
    });
    if invariant {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, common) = match &cli.command {
        Command::Ingest(c) => ("ingest", c),
        Command::Analyze(c) => ("analyze", c),
        Command::Evaluate(c) => ("evaluate", c),
        Command::Synth(c) => ("synth", c),
        Command::Selftest(c) => ("selftest", c),
    };
    let result =
        settings::Settings::load(common.config.as_deref(), common.overrides()).and_then(|s| commands::run(name, &s));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use repeatrec::eval::EvalError;

    #[test]
    fn exit_codes_follow_error_kind() {
        let input = anyhow::anyhow!("missing file");
        assert_eq!(exit_code(&input), 1);
        let broken = anyhow::Error::new(Invariant("mismatch".into())).context("evaluate");
        assert_eq!(exit_code(&broken), 2);
        let session = anyhow::Error::new(EvalError::InvalidSession { session: 3, reason: "x".into() });
        assert_eq!(exit_code(&session), 2);
    }
}
