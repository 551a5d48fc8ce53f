use std::path::PathBuf;
use std::process::ExitCode;

use advtex_cli::commands::{cmd_attack, cmd_eval, cmd_render, cmd_report};
use advtex_cli::verify::verify_white;
use advtex_cli::{init, CliError, Workdir, WORKDIR_ENV};
use clap::{Parser, Subcommand};

/// Adversarial texture optimization over keyframed scenes.
#[derive(Parser)]
#[command(name = "advtex", version)]
struct Cli {
    /// Workdir root
    #[arg(long, global = true, env = WORKDIR_ENV, default_value = "advtex-work")]
    workdir: PathBuf,
    /// Worker threads for per-frame work (0 uses all cores); overrides the config
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Config override, repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transpile the configured sequence into the workdir
    Init {
        /// Config file
        config: PathBuf,
    },
    /// Render every frame with a white texture and check object alignment
    VerifyWhite,
    /// Render every frame with its current texture
    Render {
        /// Texture to render instead of the one each frame references
        #[arg(long)]
        texture: Option<PathBuf>,
        /// Output directory (default: <workdir>/renders)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the victim and run the attack for every configured budget
    Attack,
    /// Score benign and adversarial textures of every finished run
    Eval,
    /// Print the results table and write loss_curves.csv
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let open = || Workdir::open(&cli.workdir, &cli.overrides);
    let jobs = |wd: &Workdir| cli.jobs.unwrap_or(wd.config.jobs);
    match &cli.command {
        Command::Init { config } => {
            let summary = init(config, &cli.overrides, &cli.workdir)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} frames to {}", summary.frames, cli.workdir.join("frames").display());
        }
        Command::VerifyWhite => {
            let wd = open()?;
            let report = verify_white(&wd)?;
            for c in &report.frames {
                let dev = c.deviation.map_or("n/a".to_string(), |d| format!("{d:.4}"));
                println!("frame {:04}: deviation {dev} px {}", c.frame, if c.pass { "ok" } else { "FAIL" });
            }
            if !report.passed {
                return Err(CliError::Render(format!(
                    "white-texture alignment failed on frames {:?}",
                    report.failed_frames
                )));
            }
            println!("all {} frames aligned", report.frames.len());
        }
        Command::Render { texture, out } => {
            let wd = open()?;
            let out = out.clone().unwrap_or_else(|| wd.root.join("renders"));
            let n = cmd_render(&wd, texture.as_deref(), &out)?;
            println!("rendered {n} frames to {}", out.display());
        }
        Command::Attack => {
            let wd = open()?;
            for (dir, r) in cmd_attack(&wd, jobs(&wd))? {
                println!(
                    "{dir}: {} {:.3} -> {:.3}, loss {:.4} -> {:.4}",
                    r.metric,
                    r.benign,
                    r.adversarial.unwrap_or(f64::NAN),
                    r.benign_loss,
                    r.best_loss.unwrap_or(f64::NAN)
                );
                if !r.gimbal_locked_frames.is_empty() {
                    eprintln!("warning: gimbal-locked frames {:?}", r.gimbal_locked_frames);
                }
            }
        }
        Command::Eval => {
            let wd = open()?;
            for e in cmd_eval(&wd, jobs(&wd))? {
                println!("{}: {} {:.3} -> {:.3}", e.run, e.metric, e.benign, e.adversarial);
            }
        }
        Command::Report => {
            print!("{}", cmd_report(&cli.workdir)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
