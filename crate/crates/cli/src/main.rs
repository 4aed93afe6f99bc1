use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use fsg_core::config::{AblationMode, EngineConfig};
use fsg_core::eval::{evaluate, EvalParams, HitCriterion, CSV_HEADER};
use fsg_core::io;
use fsg_core::synth::{self, NoiseProfile};
use fsg_core::{Error, GroundTruthScene};

const EXIT_INPUT: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

/// Builds hierarchical functional scene graphs from per-frame evidence.
#[derive(Parser)]
#[command(name = "fsg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene and its packet stream.
    Synth(SynthArgs),
    /// Fuse a packet stream into a scene graph.
    Run(RunArgs),
    /// Score a graph against ground truth.
    Eval(EvalArgs),
    /// Write a Graphviz description of a graph.
    ExportDot(DotArgs),
    /// Print the effective engine configuration.
    Config(ConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Noiseless,
    Noisy,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    recipe: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 120)]
    frames: usize,
    #[arg(long, value_enum, default_value = "noiseless")]
    noise: Noise,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    centroid_sigma: Option<f64>,
    #[arg(long)]
    bbox_jitter: Option<f64>,
    #[arg(long)]
    flip_p: Option<f64>,
    #[arg(long)]
    score_sigma: Option<f64>,
    #[arg(long)]
    depth_missing: Option<f64>,
    /// Output prefix; writes `<out>.packets.jsonl` and `<out>.gt.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EngineArgs {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set edgeopt.lambda_d=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    mode: Option<AblationMode>,
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    packets: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    /// Output prefix; writes `<out>.graph.json` and `<out>.events.jsonl`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append a summary row to this CSV file, writing the header if new.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Count a label as correct when it ranks in the top k instead of
    /// passing the similarity threshold.
    #[arg(long, value_name = "K")]
    recall_at: Option<usize>,
}

#[derive(Args)]
struct DotArgs {
    graph: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    #[command(flatten)]
    engine: EngineArgs,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    io::write_atomic(path, contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}

fn engine_config(args: &EngineArgs) -> Result<EngineConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            EngineConfig::from_kv(&read_text(p)?).with_context(|| format!("in {}", p.display()))?
        }
        None => EngineConfig::default(),
    };
    if let Some(mode) = args.mode {
        cfg = cfg.with_mode(mode);
    }
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(stride) = args.stride {
        cfg.set("engine.stride", &stride.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let mut noise = match a.noise {
        Noise::Noiseless => NoiseProfile::noiseless(a.seed),
        Noise::Noisy => NoiseProfile::noisy(a.seed),
    };
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut noise.dropout_p, a.dropout);
    set(&mut noise.centroid_sigma, a.centroid_sigma);
    set(&mut noise.bbox_jitter, a.bbox_jitter);
    set(&mut noise.score_flip_p, a.flip_p);
    set(&mut noise.score_sigma, a.score_sigma);
    set(&mut noise.depth_missing_p, a.depth_missing);
    noise.validate()?;

    let scene = synth::generate_named(&a.recipe, a.seed)?;
    let packets = synth::render_stream(&scene, &noise, a.frames)?;
    let packets_path = with_suffix(&a.out, ".packets.jsonl");
    let gt_path = with_suffix(&a.out, ".gt.json");
    write(&packets_path, &io::packets_to_string(&packets))?;
    write(&gt_path, &io::to_json_string(&scene))?;
    println!("{}\n{}", packets_path.display(), gt_path.display());
    Ok(())
}

fn run_cmd(a: RunArgs) -> Result<()> {
    let cfg = engine_config(&a.engine)?;
    let packets = io::read_packets_file(&a.packets)
        .with_context(|| format!("reading {}", a.packets.display()))?;
    info!(
        "{} packets, mode {}, stride {}",
        packets.len(),
        cfg.mode,
        cfg.stride
    );
    let out = fsg_core::engine::run(&packets, cfg)?;

    let mut events = String::new();
    for e in &out.events {
        events.push_str(&serde_json::to_string(e)?);
        events.push('\n');
    }
    let graph_path = with_suffix(&a.out, ".graph.json");
    let events_path = with_suffix(&a.out, ".events.jsonl");
    write(&graph_path, &io::to_json_string(&out.graph))?;
    write(&events_path, &events)?;
    println!(
        "{} nodes, {} edges -> {}",
        out.graph.nodes.len(),
        out.graph.edges.len(),
        graph_path.display()
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let graph = io::graph_from_json(&read_text(&a.graph)?)
        .with_context(|| format!("in {}", a.graph.display()))?;
    let gt: GroundTruthScene =
        io::from_json_str(&read_text(&a.gt)?).with_context(|| format!("in {}", a.gt.display()))?;
    gt.validate()?;
    let mut params = EvalParams::default();
    if let Some(k) = a.recall_at {
        anyhow::ensure!(k >= 1, "--recall-at must be at least 1");
        params.criterion = HitCriterion::RecallAtK(k);
    }
    let report = evaluate(&gt, &graph, &params);
    let json = io::to_json_string(&report);
    match &a.out {
        Some(p) => {
            write(p, &json)?;
            println!(
                "node recall {:.4}, triplet recall {:.4}",
                report.nodes.overall.value(),
                report.triplets.overall.value()
            );
        }
        None => println!("{json}"),
    }
    if let Some(csv) = &a.csv {
        let mut text = if csv.exists() {
            read_text(csv)?
        } else {
            format!("{CSV_HEADER}\n")
        };
        text.push_str(&report.csv_row(&gt.recipe));
        text.push('\n');
        write(csv, &text)?;
    }
    Ok(())
}

fn dot_cmd(a: DotArgs) -> Result<()> {
    let graph = io::graph_from_json(&read_text(&a.graph)?)
        .with_context(|| format!("in {}", a.graph.display()))?;
    let dot = io::to_dot(&graph);
    match &a.out {
        Some(p) => write(p, &dot),
        None => {
            print!("{dot}");
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Invariant(_)) => EXIT_INVARIANT,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::ExportDot(a) => dot_cmd(a),
        Command::Config(a) => engine_config(&a.engine).map(|c| print!("{}", c.to_kv())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
