// SPDX-License-Identifier: MIT OR Apache-2.0

//! `slotbind`: run the concept-slot SAE experiments stage by stage.
//!
//! Every verb works on one run directory. Missing upstream artifacts are
//! produced on demand, existing ones are reused.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slotbind::harness::{self, ExperimentConfig, HarnessError, RunDir, Task};
use slotbind::sae::Ablation;

#[derive(Parser, Debug)]
#[command(name = "slotbind", version, about = "Concept-slot SAE experiments on a tiny causal LM")]
struct Cli {
    /// Experiment config (TOML). Defaults to the run directory's config,
    /// then to built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate the corpus for the configured task.
    Datagen,
    /// Train the LM for the configured task.
    TrainLm,
    /// Capture residual activations at the final prompt token.
    CollectActs,
    /// Train one SAE.
    TrainSae {
        #[arg(long)]
        layer: Option<usize>,
        /// joint, no_align, no_ortho, no_value, no_stage1 or traditional.
        #[arg(long, default_value = "joint")]
        arm: String,
    },
    /// LM accuracy, per-layer metrics and swap grid, fragmentation contrast.
    Eval,
    /// Swap sweep of the joint SAE at one layer.
    Swap {
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Train and score every ablation arm.
    Ablate,
    /// Step-wise 2-hop evaluation.
    Twohop,
    /// Binding and validation curves over 2-hop checkpoints.
    Grok,
    /// Render summary and SVG plots from existing CSV files.
    Report,
    /// Print the resolved config and exit.
    ShowConfig,
}

fn resolve_config(cli: &Cli, out: &PathBuf) -> harness::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| HarnessError::Validation(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None if out.join("config.toml").exists() => RunDir::open(out)?.config,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> harness::Result<PathBuf> {
    if let Some(o) = &cli.out {
        return Ok(o.clone());
    }
    if let Some(p) = &cli.config {
        let text = fs::read_to_string(p).map_err(|e| HarnessError::Validation(format!("{}: {e}", p.display())))?;
        if let Some(o) = ExperimentConfig::from_toml(&text)?.out_dir {
            return Ok(o);
        }
    }
    Ok(PathBuf::from("runs/default"))
}

fn run(cli: Cli) -> harness::Result<()> {
    let out = out_dir(&cli)?;
    let cfg = resolve_config(&cli, &out)?;
    if let Cmd::ShowConfig = cli.cmd {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let run = RunDir::create(&out, cfg)?;
    let c = &run.config;
    match cli.cmd {
        Cmd::Datagen => match c.task {
            Task::OneHop => {
                let d = harness::datagen(&run)?;
                println!(
                    "profiles {}  questions {}  vocab {}",
                    d.profiles.len(),
                    d.questions.len(),
                    d.vocab.len()
                );
            }
            Task::TwoHop => {
                let d = harness::twohop_data(&run)?;
                println!(
                    "entities {}  examples {}  vocab {}",
                    d.graph.entities.len(),
                    d.examples.len(),
                    d.vocab.len()
                );
            }
        },
        Cmd::TrainLm => match c.task {
            Task::OneHop => {
                let d = harness::datagen(&run)?;
                let lm = harness::train_lm_stage(&run, &d)?;
                let r = harness::evaluate_lm(&run, &d, &lm)?;
                println!(
                    "train exact match {:.4}  unseen exact match {:.4}",
                    r.train.accuracy, r.unseen.accuracy
                );
            }
            Task::TwoHop => {
                harness::train_twohop_lm(&run)?;
                println!("2-hop LM written to {}", run.path("twohop/lm.bin").display());
            }
        },
        Cmd::CollectActs => {
            let d = harness::datagen(&run)?;
            let lm = harness::load_lm_stage(&run)?;
            let s = harness::collect_acts(&run, &d, &lm)?;
            println!("{} records, d_model {}", s.records.len(), s.d_model);
        }
        Cmd::TrainSae { layer, arm } => {
            let layer = layer.unwrap_or(c.sae_layer);
            let d = harness::datagen(&run)?;
            let lm = harness::load_lm_stage(&run)?;
            let store = harness::collect_acts(&run, &d, &lm)?;
            let p = if arm == "traditional" {
                harness::traditional_sae(&run, &d, &store, layer)?
            } else {
                let a = Ablation::parse(&arm).ok_or_else(|| HarnessError::Validation(format!("unknown arm {arm}")))?;
                harness::train_layer_sae(&run, &d, &store, layer, a)?
            };
            println!("layer {layer} arm {arm}: {} units", p.n_free() + p.n_rel());
        }
        Cmd::Eval => {
            let sweep = harness::run_layer_sweep(&run)?;
            for m in &sweep.metrics {
                let peak = sweep.swap.peak(m.layer).map(|p| p.1).unwrap_or(0.0);
                println!(
                    "layer {}  diag {:.4}  binding {:.4}/{:.4}  peak swap {:.4}",
                    m.layer, m.train_diag, m.train_binding.accuracy, m.unseen_binding.accuracy, peak
                );
            }
            let f = harness::traditional_contrast(&run, c.sae_layer)?;
            println!(
                "fragmentation: aligned {:.3}/{:.3}  traditional {:.3}/{:.3} (eff_feat/top1c)",
                f.aligned.mean_eff_feat, f.aligned.mean_top1c, f.traditional.mean_eff_feat, f.traditional.mean_top1c
            );
        }
        Cmd::Swap { layer } => {
            let layer = layer.unwrap_or(c.sae_layer);
            let r = harness::run_swap(&run, layer)?;
            if let Some((a, s)) = r.peak(layer) {
                println!("layer {layer}: peak success {s:.4} at alpha {a}");
            }
        }
        Cmd::Ablate => {
            let t = harness::run_ablation_suite(&run)?;
            for r in &t.rows {
                println!(
                    "{:<10} binding {:.4}  independence {:.3}  peak swap {:.4}  product {:.4}",
                    r.arm, r.unseen_binding, r.independence, r.peak_swap, r.product
                );
            }
        }
        Cmd::Twohop => {
            let r = harness::run_twohop_eval(&run)?;
            println!(
                "hop accuracy {:.4}/{:.4}  step diag {:.4}/{:.4}  peak swap sae {:.4} traditional {:.4} probe {:.4}",
                r.hop1_accuracy, r.hop2_accuracy, r.step1.diag, r.step2.diag, r.sae_peak.1, r.traditional_peak.1, r.probe_peak.1
            );
        }
        Cmd::Grok => {
            let t = harness::run_grok_tracker(&run)?;
            for (curve, e) in &t.crossings {
                match e {
                    Some(e) => println!("{curve} crosses {} at epoch {e}", t.threshold),
                    None => println!("{curve} never crosses {}", t.threshold),
                }
            }
            if let Some(l) = t.lag {
                println!("lag {l} epochs");
            }
        }
        Cmd::Report => {
            let idx = harness::emit_reports(&run)?;
            for w in &idx.written {
                println!("wrote {w}");
            }
            for (s, v) in &idx.missing {
                println!("missing {s} (run `{v}`)");
            }
        }
        Cmd::ShowConfig => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
