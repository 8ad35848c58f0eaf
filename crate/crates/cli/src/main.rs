use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gluing_core::agents::{Agent, AgentKind};
use gluing_core::diff::save_store;
use gluing_core::eval::{evaluate, report};
use gluing_core::generator::{generate_dataset, GeneratorConfig};
use gluing_core::oracle::{self, load_csv, save_csv};
use gluing_core::scene::io::load_scenes;
use gluing_core::scene::GraphMode;
use gluing_core::trainer::{run_rl, run_supervised, write_curve, SupervisedConfig, SupervisedTask, TowerPool, TrainConfig};
use gluing_service::{Registry, StimulusSet, Store, DEFAULT_SET};

// Training churns parameter-sized buffers between long-lived replay entries;
// glibc malloc fragments without bound on that pattern.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "gluing", version, about = "Tower gluing task: physics, agents, training and play service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample unstable towers into a scene file plus manifest.
    Generate(GenerateArgs),
    /// Brute-force the optimal glue configuration for every tower.
    Oracle {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Train(TrainCommand),
    /// Greedy evaluation against oracle results, with CSV tables and plots.
    Eval(EvalArgs),
    /// Run the play service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// human (15 per size), practice (1 per size) or training (100k per size).
    #[arg(long, default_value = "human")]
    preset: String,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TrainCommand {
    /// Deep Q-learning on a scene file.
    Rl {
        #[arg(long)]
        agent: AgentKind,
        #[arg(long)]
        scenes: PathBuf,
        /// JSON training config; fields left out keep the preset's values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// full or desk.
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stability or glue prediction on 5-block scenes.
    Supervised {
        #[arg(long, default_value = "stability")]
        task: SupervisedTask,
        #[arg(long, default_value = "sparse")]
        mode: GraphMode,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long, default_value_t = 5_000)]
        train_scenes: usize,
        #[arg(long, default_value_t = 20_000)]
        max_updates: usize,
        #[arg(long, default_value_t = 250)]
        eval_every: usize,
        #[arg(long)]
        stop_at: Option<f64>,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    agent: AgentKind,
    /// Agent directory written by `train rl`; not needed for random or sim.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    oracle: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Directory for session logs.
    #[arg(long, default_value = "sessions")]
    data: PathBuf,
    /// UI bundle to serve for non-API paths.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Seed for the default stimulus set.
    #[arg(long, default_value_t = 2018)]
    stimulus_seed: u64,
    /// Seed for per-session trial orders.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate_cmd(a),
        Command::Oracle { scenes, out } => oracle_cmd(&scenes, &out),
        Command::Train(t) => train_cmd(t),
        Command::Eval(a) => eval_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn generate_cmd(a: GenerateArgs) -> Result<()> {
    let mut cfg = GeneratorConfig::preset(&a.preset, a.seed)?;
    if let Some(s) = a.sizes {
        cfg.sizes = s;
    }
    if let Some(c) = a.count {
        cfg.count_per_size = c;
    }
    let m = generate_dataset(&cfg, &a.out)?;
    for s in &m.per_size {
        println!("size {:>2}: {} towers, rejection rate {:.4}", s.size, s.accepted, s.rejection_rate);
    }
    println!("wrote {} towers to {}", m.total, a.out.display());
    Ok(())
}

fn oracle_cmd(scenes: &Path, out: &Path) -> Result<()> {
    let towers = load_scenes(scenes)?;
    let results = towers
        .iter()
        .enumerate()
        .map(|(i, t)| oracle::solve(t).with_context(|| format!("tower {i}")))
        .collect::<Result<Vec<_>>>()?;
    save_csv(out, &results)?;
    println!("solved {} towers into {}", results.len(), out.display());
    Ok(())
}

fn train_cmd(t: TrainCommand) -> Result<()> {
    match t {
        TrainCommand::Rl { agent, scenes, config, preset, seed, out } => {
            let mut cfg = TrainConfig::preset(&preset, 0)?;
            if let Some(p) = config {
                // Overlay the file on the preset, field by field.
                let mut base = serde_json::to_value(&cfg)?;
                let patch: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p)?)?;
                let (Some(b), Some(o)) = (base.as_object_mut(), patch.as_object()) else {
                    bail!("{} must hold a JSON object", p.display());
                };
                for (k, v) in o {
                    b.insert(k.clone(), v.clone());
                }
                cfg = serde_json::from_value(base)?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let pool = TowerPool::new(load_scenes(&scenes)?);
            let report = run_rl(agent, &pool, &cfg)?;
            report.save(&out)?;
            std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
            let tail = &report.log[report.log.len().saturating_sub(500)..];
            let mean = tail.iter().map(|l| l.scaled_return).sum::<f64>() / tail.len().max(1) as f64;
            println!("{} episodes; mean scaled return over the last {}: {mean:.3}", report.log.len(), tail.len());
            Ok(())
        }
        TrainCommand::Supervised { task, mode, steps, train_scenes, max_updates, eval_every, stop_at, lr, seed, out } => {
            let cfg = SupervisedConfig {
                task,
                mode,
                steps,
                train_scenes,
                max_updates,
                eval_every,
                stop_at,
                lr,
                seed,
                ..SupervisedConfig::default()
            };
            let r = run_supervised(&cfg)?;
            std::fs::create_dir_all(&out)?;
            write_curve(std::fs::File::create(out.join("curve.csv"))?, &r.curve)?;
            save_store(&out.join("params.ckpt"), &r.store)?;
            std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
            for p in &r.curve {
                println!("{:>6} loss {:.4} accuracy {:.4}", p.update, p.train_loss, p.test_accuracy);
            }
            Ok(())
        }
    }
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let agent = match (a.agent, &a.checkpoint) {
        (AgentKind::Random, _) => Agent::Random,
        (AgentKind::Sim, _) => Agent::Sim,
        (kind, Some(dir)) => {
            let agent = Agent::load(dir)?;
            if agent.kind() != kind {
                bail!("checkpoint {} holds a {} agent, not {kind}", dir.display(), agent.kind());
            }
            agent
        }
        (kind, None) => bail!("agent {kind} needs --checkpoint"),
    };
    let towers: Vec<Arc<_>> = load_scenes(&a.scenes)?.into_iter().map(Arc::new).collect();
    let oracles = load_csv(&a.oracle)?;
    let records = evaluate(&agent, &towers, &oracles, a.epsilon, a.seed)?;
    for f in report(&records, &a.out)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let registry = Registry::new().with(StimulusSet::standard(DEFAULT_SET, a.stimulus_seed)?);
    let store = Arc::new(Store::open(&a.data, registry, a.seed)?);
    println!("resumed {} sessions from {}", store.session_ids().len(), a.data.display());
    println!("listening on http://{}", a.addr);
    tokio::runtime::Runtime::new()?.block_on(gluing_service::serve(store, a.static_dir, &a.addr))?;
    Ok(())
}
