use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use seqmorph::config::RunConfig;
use seqmorph::run::{self, stream};
use seqmorph::{gradcheck, tsv};

#[derive(Parser)]
#[command(name = "seqmorph", version, about = "Learned sequence augmentation for next-item recommendation")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config override such as `model.d=32` or `method=backbone`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic dataset as TSV.
    GenData,
    /// Train one model and write reports and the best checkpoint.
    Train,
    /// Evaluate a checkpoint on its validation and test splits.
    Eval {
        checkpoint: PathBuf,
    },
    /// Train every method at every noise ratio and seed.
    SweepNoise,
    /// Average the hard matrices of one view over a length cohort.
    DumpMatrices {
        checkpoint: PathBuf,
        /// Training prefix length of the cohort.
        #[arg(long)]
        len: usize,
        /// View to dump, 1 or 2.
        #[arg(long, default_value_t = 1)]
        view: usize,
    },
    /// Show one user's padded sequence and both generated views.
    CaseStudy {
        checkpoint: PathBuf,
        #[arg(long)]
        user: String,
    },
    /// Finite-difference check of every primitive and composite loss.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Also run a fixture with a deliberately wrong backward rule.
        #[arg(long)]
        negative_control: bool,
    },
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut sets = cli.set.clone();
    if let Some(seed) = cli.seed {
        sets.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.out {
        sets.push(format!("out={}", toml::Value::String(out.display().to_string())));
    }
    Ok(RunConfig::load(cli.config.as_deref(), &sets)?)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let cfg = config(&cli)?;
    let out = run::default_out(&cfg);
    match &cli.command {
        Command::GenData => {
            let data = run::load_dataset(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("data.tsv");
            let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            tsv::write(std::io::BufWriter::new(file), &data)?;
            println!("wrote {} users to {}", data.sequences.len(), path.display());
        }
        Command::Train => {
            let f = run::train(&cfg, &out)?;
            let t = f.test;
            println!(
                "best epoch {} test HR@10 {:.4} HR@20 {:.4} NDCG@10 {:.4} NDCG@20 {:.4}",
                f.best_epoch, t.hr10, t.hr20, t.ndcg10, t.ndcg20
            );
            println!("reports in {}", out.display());
        }
        Command::Eval { checkpoint } => {
            let (v, t) = run::eval(checkpoint)?;
            println!("split,HR@10,HR@20,NDCG@10,NDCG@20");
            println!("valid,{},{},{},{}", v.hr10, v.hr20, v.ndcg10, v.ndcg20);
            println!("test,{},{},{},{}", t.hr10, t.hr20, t.ndcg10, t.ndcg20);
        }
        Command::SweepNoise => {
            let rows = run::sweep_noise(&cfg, &out, |r| {
                eprintln!("{} ratio {} seed {} HR@10 {:.4}", r.method, r.ratio, r.seed, r.hr10);
            })?;
            println!("{} cells written to {}", rows.len(), out.join("sweep.csv").display());
        }
        Command::DumpMatrices { checkpoint, len, view } => {
            let view = view.checked_sub(1).context("view is 1-based")?;
            let d = run::dump_matrices(checkpoint, *len, view, &out)?;
            println!("averaged {} users, {} placed rows; written to {}", d.users, d.placed, out.display());
        }
        Command::CaseStudy { checkpoint, user } => {
            let study = run::case_study(checkpoint, user)?;
            let l = run::load_checkpoint(checkpoint)?;
            let text = study.render(Some(&l.data));
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join(format!("case_{user}.txt")), &text)?;
            print!("{text}");
        }
        Command::Gradcheck { trials, negative_control } => {
            let lines = gradcheck::run(*trials, *negative_control, &mut stream(cfg.seed, 0))?;
            print!("{}", gradcheck::render(&lines));
            if lines.iter().any(|l| !l.passed()) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
