//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::anneal::{self, AcceptRule, AnnealSchedule};
use crate::decoder::{decode_with, EmitRule, WindowSeq};
use crate::grad::{self, SgdConfig};
use crate::io::{self, ChainSeq};
use crate::logic;
use crate::lstm::lstm_forward;
use crate::network::{self, forward, Activation, Mode, Shape};
use crate::par;
use crate::wlang::{self, Decimal, Image, IntervalMapConfig};

#[derive(Debug, Parser)]
#[command(
    name = "deductron",
    version,
    about = "W-language generators, decoders and deductron trainers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ChainKind {
    Basic,
    Precise,
    Chaotic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutputFormat {
    Image,
    Chain,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActKind {
    Hard,
    Sigmoid,
    Rising,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleKind {
    OnArrival,
    EveryFrame,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AcceptKind {
    Metropolis,
    Greedy,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a W-language sample.
    Gen {
        #[arg(long, value_enum, default_value = "basic")]
        chain: ChainKind,
        #[arg(long, default_value_t = 500)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial point of the chaotic map, as a decimal in [0, 11).
        #[arg(long)]
        x0: Option<String>,
        /// Decimal digits carried by the chaotic orbit.
        #[arg(long)]
        digits: Option<u32>,
        #[arg(long, value_enum, default_value = "image")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode an image with the reference decoder.
    Decode {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        emit_trace: bool,
        #[arg(long, value_enum, default_value = "on-arrival")]
        rule: RuleKind,
    },
    /// Turn an image or chain file into windows with decoder targets.
    MakeDataset {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum, default_value = "on-arrival")]
        rule: RuleKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a deductron over an image.
    Sim {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum)]
        act: Option<ActKind>,
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
        #[arg(long)]
        trace: bool,
    },
    /// Simulated annealing over quantized weights.
    TrainAnneal {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        memory: usize,
        #[arg(long, default_value_t = 0.0)]
        beta_start: f64,
        #[arg(long, default_value_t = 10.0)]
        beta_end: f64,
        #[arg(long, default_value_t = 1e-5)]
        beta_step: f64,
        #[arg(long, default_value_t = 20_000)]
        stuck_limit: u64,
        #[arg(long, default_value_t = 1)]
        gamma: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, value_enum, default_value = "metropolis")]
        accept: AcceptKind,
        #[arg(long)]
        tie_biases: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV of iteration, beta, current and best loss.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Adam on continuous weights.
    TrainSgd {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 4)]
        memory: usize,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 1.0)]
        init_scale: f64,
        #[arg(long)]
        clip: Option<f64>,
        #[arg(long)]
        stop_when_perfect: bool,
        /// Quantized parameters to start from, scaled by --beta.
        #[arg(long)]
        warm_start: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Thresholded accuracy of parameters on a dataset.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        act: Option<ActKind>,
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
    },
    /// Print each unit of quantized parameters as a formula.
    ExtractLogic {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        dnf: bool,
    },
    /// Run a peephole LSTM over an image.
    LstmSim {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
}

fn emit_rule(r: RuleKind) -> EmitRule {
    match r {
        RuleKind::OnArrival => EmitRule::OnArrival,
        RuleKind::EveryFrame => EmitRule::EveryFrame,
    }
}

/// Hard for quantized parameters and rising sigmoid for continuous ones,
/// unless overridden.
fn activation(act: Option<ActKind>, beta: f64, mode: Mode) -> Activation {
    match (act, mode) {
        (Some(ActKind::Hard), _) | (None, Mode::Quantized) => Activation::Hard,
        (Some(ActKind::Sigmoid), _) => Activation::Falling { beta },
        (Some(ActKind::Rising), _) | (None, Mode::Continuous) => Activation::Rising,
    }
}

fn write_output(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

fn bits(v: &[f64]) -> String {
    v.iter().map(|&b| if b >= 0.5 { '1' } else { '0' }).collect()
}

fn dataset_from(path: &Path, rule: EmitRule) -> anyhow::Result<WindowSeq> {
    let img = io::read_image_or_chain(path)?;
    if img.is_empty() {
        bail!("{}: image has no columns", path.display());
    }
    wlang::validate_image(&img)
        .map_err(|v| anyhow::anyhow!("{}: {}", path.display(), crate::Error::InvalidImage(v)))?;
    Ok(decode_with(rule, &img)?.to_window_seq())
}

fn windows(img: &Image) -> anyhow::Result<Vec<Vec<f64>>> {
    Ok(crate::decoder::windows_from_image(img)?
        .iter()
        .map(|w| w.to_input())
        .collect())
}

/// Parses `argv` and runs the command, writing reports to `stdout`.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let invocation = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    let cli = Cli::try_parse_from(&argv)?;
    execute(cli.command, &invocation, stdout)
}

pub fn execute(cmd: Command, invocation: &str, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let provenance = vec![format!("deductron {invocation}")];
    match cmd {
        Command::Gen {
            chain,
            frames,
            seed,
            x0,
            digits,
            format,
            out,
        } => {
            if frames == 0 {
                bail!("--frames must be positive");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut comments = provenance;
            let seq = match chain {
                ChainKind::Basic => ChainSeq::Basic(wlang::generate_basic(frames, &mut rng)),
                ChainKind::Precise => ChainSeq::Precise(wlang::generate_precise(frames, &mut rng)),
                ChainKind::Chaotic => {
                    let digits = digits.unwrap_or_else(|| IntervalMapConfig::required_digits(frames).max(200));
                    let cfg = IntervalMapConfig::with_digits(digits);
                    let (start, states) = match x0 {
                        Some(text) => {
                            let start = Decimal::parse(&text, digits)?;
                            let states = wlang::generate_chaotic(&start, frames, &cfg)?;
                            (start, states)
                        }
                        None => wlang::chaotic_sample(frames, &cfg, &mut rng)?,
                    };
                    comments.push(format!("x0 = {start}"));
                    ChainSeq::Precise(states)
                }
            };
            let text = match format {
                OutputFormat::Image => io::format_image(&seq.to_image(), &comments),
                OutputFormat::Chain => io::format_chain(&seq, &comments),
            };
            write_output(&out, &text, stdout)
        }

        Command::Decode {
            image,
            emit_trace,
            rule,
        } => {
            let img = io::read_image_or_chain(&image)?;
            let decoded = decode_with(emit_rule(rule), &img)?;
            let mut report = String::new();
            if emit_trace {
                writeln!(report, "{:>5}  x11 x21 x31 x12 x22 x32  z1 z2  tX tO  emit", "t")?;
                for (t, ((w, s), e)) in decoded
                    .windows
                    .iter()
                    .zip(&decoded.states)
                    .zip(&decoded.emissions)
                    .enumerate()
                {
                    let cells: Vec<String> = w.0.iter().map(|&b| format!("{:>3}", u8::from(b))).collect();
                    writeln!(
                        report,
                        "{t:>5}  {}  {:>2} {:>2}  {:>2} {:>2}  {}",
                        cells.join(" "),
                        u8::from(s.z1),
                        u8::from(s.z2),
                        u8::from(e.x),
                        u8::from(e.o),
                        e.symbol().map_or(String::new(), String::from)
                    )?;
                }
            }
            writeln!(report, "{}", decoded.text)?;
            Ok(stdout.write_all(report.as_bytes())?)
        }

        Command::MakeDataset { image, rule, out } => {
            let data = dataset_from(&image, emit_rule(rule))?;
            write_output(&out, &io::format_dataset(&data, &provenance), stdout)
        }

        Command::Sim {
            params,
            image,
            act,
            beta,
            trace,
        } => {
            let (p, _) = io::read_params(&params)?;
            let img = io::read_image_or_chain(&image)?;
            let x = windows(&img)?;
            let act = activation(act, beta, p.mode);
            let tr = forward(&p, act, &x)?;
            let targets = crate::decoder::decode(&img)?.to_window_seq().targets;
            let mut report = String::new();
            let mut text = String::new();
            if trace {
                writeln!(report, "{:>5}  inputs  targets  outputs  emit", "t")?;
            }
            for (t, o) in tr.binary_outputs().iter().enumerate() {
                let e = crate::decoder::Emission {
                    x: o.first().copied().unwrap_or(false),
                    o: o.get(1).copied().unwrap_or(false),
                };
                text.extend(e.symbol());
                if trace {
                    writeln!(
                        report,
                        "{t:>5}  {}  {:>7}  {:>7}  {}",
                        bits(&x[t]),
                        bits(&targets[t]),
                        bits(&tr.o[t]),
                        e.symbol().map_or(String::new(), String::from)
                    )?;
                }
            }
            writeln!(report, "{text}")?;
            Ok(stdout.write_all(report.as_bytes())?)
        }

        Command::TrainAnneal {
            data,
            memory,
            beta_start,
            beta_end,
            beta_step,
            stuck_limit,
            gamma,
            seed,
            runs,
            accept,
            tie_biases,
            out,
            log,
        } => {
            if runs == 0 {
                bail!("--runs must be positive");
            }
            let train = io::read_dataset(&data)?;
            let shape = Shape::new(train.n_in, memory, train.n_out);
            let sched = AnnealSchedule {
                beta_start,
                beta_end,
                beta_step,
                stuck_limit,
                gamma,
                seed,
                rule: match accept {
                    AcceptKind::Metropolis => AcceptRule::Metropolis,
                    AcceptKind::Greedy => AcceptRule::Greedy,
                },
                tie_biases,
                ..Default::default()
            };
            let results = anneal::anneal_runs(&train, shape, &sched, runs)
                .into_iter()
                .collect::<crate::Result<Vec<_>>>()?;
            let best = anneal::best_run(&results).expect("at least one run");
            let mut report = String::new();
            for r in &results {
                writeln!(
                    report,
                    "seed {} best_loss {} restarts {} accepted {}",
                    r.seed, r.best_loss, r.restarts, r.accepted
                )?;
            }
            let acc = anneal::evaluate_accuracy(&best.best_params, Activation::Hard, &train)?;
            writeln!(
                report,
                "best seed {} loss {} frame_accuracy {:.6} emitted {}",
                best.seed,
                best.best_loss,
                acc.frame_accuracy(),
                acc.emitted
            )?;
            let config = json!({
                "command": "train-anneal",
                "invocation": invocation,
                "data": data.display().to_string(),
                "memory": memory,
                "beta_start": beta_start,
                "beta_end": beta_end,
                "beta_step": beta_step,
                "stuck_limit": stuck_limit,
                "gamma": gamma,
                "seed": best.seed,
                "base_seed": seed,
                "runs": runs,
                "accept": sched.rule.name(),
                "tie_biases": tie_biases,
                "best_loss": best.best_loss,
            });
            if let Some(path) = &log {
                let mut csv = format!("# deductron {invocation}\nrun_seed,iteration,beta,current_loss,best_loss\n");
                for r in &results {
                    for h in &r.loss_history {
                        writeln!(
                            csv,
                            "{},{},{},{},{}",
                            r.seed, h.iteration, h.beta, h.current_loss, h.best_loss
                        )?;
                    }
                }
                fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            }
            match &out {
                Some(path) => {
                    fs::write(path, io::params_to_json(&best.best_params, Some(config)))
                        .with_context(|| format!("writing {}", path.display()))?;
                }
                None => report.push_str(&io::params_to_json(&best.best_params, Some(config))),
            }
            Ok(stdout.write_all(report.as_bytes())?)
        }

        Command::TrainSgd {
            data,
            memory,
            epochs,
            lr,
            seed,
            runs,
            init_scale,
            clip,
            stop_when_perfect,
            warm_start,
            beta,
            out,
            curve,
        } => {
            if runs == 0 {
                bail!("--runs must be positive");
            }
            let train = io::read_dataset(&data)?;
            let base = SgdConfig {
                alpha: lr,
                epochs,
                seed,
                init_scale,
                clip,
                stop_when_perfect,
                ..Default::default()
            };
            let init = match &warm_start {
                Some(path) => {
                    let (q, _) = io::read_params(path)?;
                    Some(network::quantized_to_continuous(&q, beta)?)
                }
                None => None,
            };
            let shape = match &init {
                Some(p) => p.shape(),
                None => Shape::new(train.n_in, memory, train.n_out),
            };
            let results = par::run_indexed(runs, par::worker_threads(), |k| {
                let cfg = SgdConfig {
                    seed: seed.wrapping_add(k as u64),
                    ..base.clone()
                };
                match &init {
                    Some(p) => grad::train_sgd_from(&train, p.clone(), &cfg),
                    None => grad::train_sgd(&train, shape, &cfg),
                }
                .map(|r| (cfg.seed, r))
            })
            .into_iter()
            .collect::<crate::Result<Vec<_>>>()?;
            let final_loss = |r: &grad::SgdResult| *r.losses.last().expect("final loss recorded");
            let (best_seed, best) = results
                .iter()
                .reduce(|a, b| {
                    let key = |r: &grad::SgdResult| (r.accuracy.correct_bits, -final_loss(r));
                    if key(&b.1) > key(&a.1) {
                        b
                    } else {
                        a
                    }
                })
                .expect("at least one run");
            let mut report = String::new();
            for (s, r) in &results {
                writeln!(
                    report,
                    "seed {s} epochs {} loss {} bit_accuracy {:.6} frame_accuracy {:.6}",
                    r.epochs_run,
                    final_loss(r),
                    r.accuracy.bit_accuracy(),
                    r.accuracy.frame_accuracy()
                )?;
            }
            writeln!(report, "best seed {best_seed} emitted {}", best.accuracy.emitted)?;
            let config = json!({
                "command": "train-sgd",
                "invocation": invocation,
                "data": data.display().to_string(),
                "memory": shape.n_memory,
                "epochs": epochs,
                "lr": lr,
                "seed": best_seed,
                "base_seed": seed,
                "runs": runs,
                "init_scale": init_scale,
                "clip": clip,
                "warm_start": warm_start.as_ref().map(|p| p.display().to_string()),
                "beta": beta,
                "final_loss": final_loss(best),
            });
            if let Some(path) = &curve {
                let mut csv = format!("# deductron {invocation}\nepoch,loss\n");
                for (e, l) in best.losses.iter().enumerate() {
                    writeln!(csv, "{e},{l}")?;
                }
                fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            }
            match &out {
                Some(path) => fs::write(path, io::params_to_json(&best.params, Some(config)))
                    .with_context(|| format!("writing {}", path.display()))?,
                None => report.push_str(&io::params_to_json(&best.params, Some(config))),
            }
            Ok(stdout.write_all(report.as_bytes())?)
        }

        Command::Eval {
            params,
            data,
            act,
            beta,
        } => {
            let (p, _) = io::read_params(&params)?;
            let ds = io::read_dataset(&data)?;
            let acc = anneal::evaluate_accuracy(&p, activation(act, beta, p.mode), &ds)?;
            let mut report = String::new();
            writeln!(
                report,
                "bit_accuracy {:.6} ({}/{})",
                acc.bit_accuracy(),
                acc.correct_bits,
                acc.total_bits
            )?;
            writeln!(
                report,
                "frame_accuracy {:.6} ({}/{})",
                acc.frame_accuracy(),
                acc.correct_frames,
                acc.total_frames
            )?;
            for (k, c) in acc.confusion.iter().enumerate() {
                writeln!(
                    report,
                    "o{} tp {} fp {} tn {} fn {}",
                    k + 1,
                    c.true_pos,
                    c.false_pos,
                    c.true_neg,
                    c.false_neg
                )?;
            }
            writeln!(report, "emitted  {}", acc.emitted)?;
            writeln!(report, "expected {}", acc.expected)?;
            writeln!(report, "strings_match {}", acc.strings_match())?;
            Ok(stdout.write_all(report.as_bytes())?)
        }

        Command::ExtractLogic { params, dnf } => {
            let (mut p, _) = io::read_params(&params)?;
            if p.mode == Mode::Continuous {
                eprintln!("warning: continuous weights rounded to the nearest quantized values");
                p = network::round_to_quantized(&p);
            }
            let report = logic::report(&p)?;
            Ok(stdout.write_all(report.render(dnf).as_bytes())?)
        }

        Command::LstmSim { params, image } => {
            let p = io::read_lstm(&params)?;
            let img = io::read_image_or_chain(&image)?;
            let x = windows(&img)?;
            let tr = lstm_forward(&p, &x)?;
            let mut report = String::new();
            for (t, h) in tr.h.iter().enumerate() {
                let cells: Vec<String> = h.iter().map(|v| format!("{v:.6}")).collect();
                writeln!(report, "{t} {}", cells.join(" "))?;
            }
            Ok(stdout.write_all(report.as_bytes())?)
        }
    }
}
