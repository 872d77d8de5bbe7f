use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::bench::bench_latency;
use super::config::RunConfig;
use super::mode::Mode;
use super::suite::{ablation_matrix, run_suite, write_episodes_jsonl, ExperimentConfig, PolicySet};
use crate::error::{NavError, Result};
use crate::learn::infotheory::run_info_checks;
use crate::learn::{train, write_metrics_jsonl};
use crate::pointcloud::{project, read_xyz, PointCloud};
use crate::policy::{Checkpoint, PolicyNet, PolicyParams};
use crate::schedule::{run_timeline, write_aoi_trace};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "asyncnav",
    version,
    about = "Asynchronous perception and control for reactive navigation"
)]
struct Cli {
    /// Config file with flat dotted keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy; writes <mode>.ckpt.json and <mode>.metrics.jsonl.
    Train {
        #[arg(long, value_enum, default_value = "proposed")]
        mode: Mode,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Evaluate one mode; writes the episode log and the report.
    Eval {
        #[arg(long, value_enum, default_value = "proposed")]
        mode: Mode,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        v_des: Option<f64>,
        #[arg(long)]
        density: Option<f64>,
        /// Keep per-tick records in the episode log.
        #[arg(long)]
        record_steps: bool,
    },
    /// Sweep modes over speeds and densities.
    Ablate {
        /// Directory holding <mode>.ckpt.json files; defaults to --out-dir.
        #[arg(long, value_name = "DIR")]
        checkpoint_dir: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Project an "x y z" point file into a pseudo-image file.
    Project { cloud: PathBuf, output: PathBuf },
    /// Time projection and the policy forward pass.
    Bench {
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Export the age-of-information sawtooth of the configured schedule.
    AoiTrace {
        /// Simulated seconds.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        /// Output file; defaults to <out-dir>/aoi_trace.txt.
        output: Option<PathBuf>,
    },
    /// Run the variance-decomposition and entropy checks.
    Verify {
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
}

/// One-line, `key=value` error report.
pub fn error_line(kind: &str, message: &str) -> String {
    let msg = message
        .trim()
        .replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', " | ");
    format!("error kind={kind} message=\"{msg}\"")
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    let first = e
                        .to_string()
                        .lines()
                        .next()
                        .unwrap_or("")
                        .trim_start_matches("error: ")
                        .to_string();
                    eprintln!("{}", error_line("usage", &first));
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            if matches!(e, NavError::Usage(_)) {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out_dir: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn say(&self, s: &str) {
        if !self.quiet {
            println!("{s}");
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.out(name))?))
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("")?,
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
        cfg.eval.seed = s;
        cfg.bench.seed = s;
        cfg.train.env.schedule.jitter_seed = s;
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    let ctx = Ctx {
        cfg,
        out_dir: cli.out_dir,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Train { mode, iterations } => cmd_train(&ctx, mode, iterations),
        Command::Eval {
            mode,
            trials,
            checkpoint,
            v_des,
            density,
            record_steps,
        } => {
            let mut eval = ctx.cfg.eval.clone();
            eval.trials = trials.unwrap_or(eval.trials);
            eval.v_des = v_des.or(eval.v_des);
            eval.density = density.or(eval.density);
            eval.record_steps |= record_steps;
            let exp = ExperimentConfig {
                mode,
                env: ctx.cfg.train.env.clone(),
                checkpoint: checkpoint.or_else(|| ctx.cfg.checkpoint.clone()),
                eval,
            };
            cmd_eval(&ctx, &exp)
        }
        Command::Ablate {
            checkpoint_dir,
            trials,
        } => cmd_ablate(&ctx, checkpoint_dir, trials),
        Command::Project { cloud, output } => {
            let raw = read_xyz(BufReader::new(File::open(&cloud)?))?;
            let img = project(&ctx.cfg.train.env.grid, &PointCloud::from_cartesian(&raw)?);
            let mut w = BufWriter::new(File::create(&output)?);
            img.write_to(&mut w)?;
            w.flush()?;
            ctx.say(&format!(
                "projected {} points into {}",
                raw.len(),
                output.display()
            ));
            Ok(0)
        }
        Command::Bench { sizes, repetitions } => {
            let mut b = ctx.cfg.bench.clone();
            b.sizes = sizes.unwrap_or(b.sizes);
            b.repetitions = repetitions.unwrap_or(b.repetitions);
            let report = bench_latency(&ctx.cfg.train.env.grid, &ctx.cfg.train.policy, &b)?;
            std::fs::write(ctx.out("bench.json"), report.to_json()?)?;
            std::fs::write(ctx.out("bench.txt"), report.to_table())?;
            ctx.say(&report.to_table());
            Ok(0)
        }
        Command::AoiTrace { duration, output } => {
            let tl = run_timeline(&ctx.cfg.train.env.schedule, duration)?;
            let path = output.unwrap_or_else(|| ctx.out("aoi_trace.txt"));
            let mut w = BufWriter::new(File::create(&path)?);
            write_aoi_trace(&mut w, &tl.aoi)?;
            w.flush()?;
            ctx.say(&format!(
                "{} control ticks written to {}",
                tl.aoi.len(),
                path.display()
            ));
            Ok(0)
        }
        Command::Verify { samples } => {
            let report = run_info_checks(samples, ctx.cfg.eval.seed)?;
            std::fs::write(
                ctx.out("verify.json"),
                serde_json::to_string_pretty(&report)?,
            )?;
            let d = &report.delayed;
            ctx.say(&format!(
                "variance: blind {:.6} = within {:.6} + excess {:.6} (residual {:.2e}, se {:.2e}) balanced={}",
                d.estimate.blind, d.estimate.within, d.estimate.excess, d.residual, d.std_error, d.balanced
            ));
            ctx.say(&format!(
                "delay-free excess {:.3e} balanced={}",
                report.delay_free.estimate.excess, report.delay_free.balanced
            ));
            ctx.say(&format!(
                "entropy: aware {:.6} <= blind {:.6}; delay-free {:.6} = {:.6}; min joint gap {:.3e}",
                report.entropy.aware,
                report.entropy.blind,
                report.entropy_delay_free.aware,
                report.entropy_delay_free.blind,
                report.min_joint_gap
            ));
            let pass = report.passed();
            ctx.say(if pass { "verify: pass" } else { "verify: FAIL" });
            Ok(if pass { 0 } else { EXIT_FAILURE })
        }
    }
}

fn checkpoint_name(mode: Mode) -> String {
    format!("{}.ckpt.json", mode.policy_source().name())
}

fn cmd_train(ctx: &Ctx, mode: Mode, iterations: Option<usize>) -> Result<i32> {
    if mode == Mode::Ideal {
        return Err(NavError::Usage(
            "the ideal mode runs the proposed policy; train 'proposed'".into(),
        ));
    }
    let mut tc = mode.train_config(&ctx.cfg.train);
    tc.iterations = iterations.unwrap_or(tc.iterations);
    let quiet = ctx.quiet;
    let outcome = train(&tc, |m, _, _| {
        if !quiet {
            println!(
                "iter {:>4} {:<12} return {:>9.3} success {:.3} aoi {:.4}",
                m.iteration,
                format!("{:?}", m.stage).to_lowercase(),
                m.mean_return,
                m.success_rate,
                m.mean_aoi
            );
        }
    })?;
    let mut w = ctx.create(&format!("{}.metrics.jsonl", mode.name()))?;
    write_metrics_jsonl(&mut w, &outcome.metrics)?;
    w.flush()?;
    let ck = outcome.checkpoint.clone().with_meta("mode", mode);
    ck.save(&ctx.out(&checkpoint_name(mode)))?;
    if let Some(reason) = &outcome.halted {
        eprintln!("{}", error_line("divergence", reason));
        return Ok(EXIT_FAILURE);
    }
    ctx.say(&format!(
        "saved {}",
        ctx.out(&checkpoint_name(mode)).display()
    ));
    Ok(0)
}

/// Loads `path`, or the default checkpoint in `dir`, or falls back to an
/// untrained policy with a warning.
fn load_policy(
    ctx: &Ctx,
    mode: Mode,
    path: Option<&Path>,
    dir: &Path,
) -> Result<(PolicyNet, PolicyParams)> {
    let default = dir.join(checkpoint_name(mode));
    let chosen = path
        .map(Path::to_path_buf)
        .or_else(|| default.exists().then_some(default));
    match chosen {
        Some(p) => {
            let ck = Checkpoint::load(&p)?;
            ck.ensure_config(&ctx.cfg.train.policy)
                .map_err(|e| NavError::Config(e.to_string()))?;
            ck.into_net()
        }
        None => {
            eprintln!(
                "warning: no checkpoint for mode {mode}; evaluating an untrained policy (seed {})",
                ctx.cfg.train.seed
            );
            let net = PolicyNet::new(ctx.cfg.train.policy.clone())?;
            let params = net.init_params(ctx.cfg.train.seed);
            Ok((net, params))
        }
    }
}

fn cmd_eval(ctx: &Ctx, exp: &ExperimentConfig) -> Result<i32> {
    let (net, params) = load_policy(ctx, exp.mode, exp.checkpoint.as_deref(), &ctx.out_dir)?;
    let (report, records) = run_suite(exp, &net, &params)?;
    let stem = format!("eval_{}", exp.mode.name());
    let mut w = ctx.create(&format!("{stem}.episodes.jsonl"))?;
    write_episodes_jsonl(&mut w, &records)?;
    w.flush()?;
    std::fs::write(ctx.out(&format!("{stem}.report.json")), report.to_json()?)?;
    std::fs::write(ctx.out(&format!("{stem}.report.txt")), report.to_table())?;
    ctx.say(&report.to_table());
    Ok(0)
}

fn cmd_ablate(ctx: &Ctx, dir: Option<PathBuf>, trials: Option<usize>) -> Result<i32> {
    let dir = dir.unwrap_or_else(|| ctx.out_dir.clone());
    let mut policies = PolicySet::new();
    for &mode in &ctx.cfg.ablate.modes {
        let src = mode.policy_source();
        if policies.get(src).is_err() {
            let (net, params) = load_policy(ctx, src, None, &dir)?;
            policies.insert(src, net, params);
        }
    }
    let mut eval = ctx.cfg.eval.clone();
    eval.trials = trials.unwrap_or(eval.trials);
    let base = ExperimentConfig {
        mode: Mode::Proposed,
        env: ctx.cfg.train.env.clone(),
        checkpoint: None,
        eval,
    };
    let a = &ctx.cfg.ablate;
    let report = ablation_matrix(
        &base,
        &a.modes,
        &a.speeds,
        &a.densities,
        a.anchors,
        &policies,
    )?;
    std::fs::write(ctx.out("ablation.tsv"), report.to_table())?;
    std::fs::write(ctx.out("ablation.json"), report.to_json()?)?;
    ctx.say(&report.to_table());
    Ok(0)
}
