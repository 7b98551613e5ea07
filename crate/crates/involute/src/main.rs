use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use involute::cli::{cmd_demo, cmd_eval, cmd_train};
use involute::config::{parse_config, RunConfig};
use involute::gan::Mode;
use involute::subseed;

/// Training and evaluation for unpaired domain translation with a single
/// self-inverse generator (plus the two-generator baseline).
#[derive(Parser)]
#[command(name = "involute", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train per a config file, writing loss/metrics CSVs, checkpoints,
    /// and sample dumps into the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides all three run seeds, derived from this one value.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<u64>,
        /// one2one or baseline.
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the config's task and append one metrics
    /// row.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Held-out evaluation seed (defaults to one derived from the
        /// config's data seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Translate one CSV/PGM file through a checkpointed generator.
    Demo {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Apply the generator this many times (2 demonstrates the
        /// round trip).
        #[arg(long, default_value_t = 1)]
        repeat: u32,
        /// Optional cross-check that the checkpoint came from this config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn apply_overrides(
    cfg: &mut RunConfig,
    seed: Option<u64>,
    epochs: Option<u64>,
    mode: Option<Mode>,
    out: Option<PathBuf>,
) {
    if let Some(s) = seed {
        cfg.run.seed_data = subseed(s, 0);
        cfg.run.seed_init = subseed(s, 1);
        cfg.run.seed_train = subseed(s, 2);
    }
    if let Some(e) = epochs {
        cfg.run.epochs = e;
    }
    if let Some(m) = mode {
        cfg.run.mode = m;
    }
    if let Some(o) = out {
        cfg.run.out = o;
    }
}

fn config_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(command: Command) -> involute::Result<()> {
    match command {
        Command::Train {
            config,
            seed,
            epochs,
            mode,
            out,
        } => {
            let mut cfg = parse_config(&config)?;
            apply_overrides(&mut cfg, seed, epochs, mode, out);
            let summary = cmd_train(&cfg, &config_dir(&config))?;
            print!("{}", summary.render());
            Ok(())
        }
        Command::Eval {
            config,
            checkpoint,
            seed,
            out,
        } => {
            let mut cfg = parse_config(&config)?;
            apply_overrides(&mut cfg, None, None, None, out);
            let (_, row) = cmd_eval(&cfg, &config_dir(&config), &checkpoint, seed)?;
            println!("{}", involute::metrics::MetricsReport::csv_header());
            println!("{row}");
            Ok(())
        }
        Command::Demo {
            checkpoint,
            input,
            output,
            repeat,
            config,
        } => {
            let cfg = config.as_deref().map(parse_config).transpose()?;
            cmd_demo(&checkpoint, &input, &output, repeat, cfg.as_ref())?;
            println!("wrote {}", output.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
