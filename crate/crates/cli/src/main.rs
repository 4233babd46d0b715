//! `sasv` — evaluation and score fusion for spoofing-aware speaker
//! verification.
//!
//! Subcommands: `gen` (synthetic cohorts), `score` (protocol scoring
//! with a chosen back-end), `train` (embedding-fusion MLP), `det` (DET
//! curve export), `eval` (EER report from a score file).

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sasv_core::det::{det_csv, det_svg, DetSystem};
use sasv_core::embedding::{CmOutputs, EmbeddingStore};
use sasv_core::fusion::{mlp_train, MlpArchitecture, MlpFusionModel, TrainConfig};
use sasv_core::metrics::{all_eers, sweep, EerReport, ScoredTrial};
use sasv_core::protocol::{MetricKind, Protocol};
use sasv_core::scoring::{
    assemble_training_data, parse_scores, round_to_wire_precision, score_protocol,
    scores_to_string, Backend, ScoringInputs,
};
use sasv_core::sigfig::format_sig;
use sasv_core::synthgen::{generate, CohortSpec};

use config::ConfigFile;

#[derive(Parser)]
#[command(
    name = "sasv",
    version,
    about = "Spoofing-aware speaker verification: scoring, fusion and EER/DET evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic cohort (protocol + stores)
    Gen(GenArgs),
    /// Score a protocol with a fusion back-end and report the three EERs
    Score(ScoreArgs),
    /// Train the embedding-fusion MLP from a protocol and stores
    Train(TrainArgs),
    /// Export DET curves (CSV + SVG) from score files
    Det(DetArgs),
    /// Recompute the EER report from an existing score file
    Eval(EvalArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Score(args) => cmd_score(args),
        Command::Train(args) => cmd_train(args),
        Command::Det(args) => cmd_det(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

// ---------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------

#[derive(Args)]
struct GenArgs {
    /// Output directory for the four cohort files
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_speakers: Option<usize>,
    /// Bona fide test utterances per speaker
    #[arg(long)]
    utts_per_speaker: Option<usize>,
    /// Spoofed test utterances per speaker
    #[arg(long)]
    spoofs_per_speaker: Option<usize>,
    /// Speaker embedding dimension
    #[arg(long)]
    d_spk: Option<usize>,
    /// Countermeasure embedding dimension
    #[arg(long)]
    d_cm: Option<usize>,
    /// Scale of speaker centroids
    #[arg(long)]
    sigma_between: Option<f64>,
    /// Scale of per-utterance noise
    #[arg(long)]
    sigma_within: Option<f64>,
    /// Countermeasure-space offset carried by spoofed utterances
    #[arg(long)]
    artifact_strength: Option<f64>,
    /// Logit margin separating bona fide from spoofed outputs
    #[arg(long)]
    cm_margin: Option<f64>,
    /// key = value file; flags override config values
    #[arg(long)]
    config: Option<PathBuf>,
}

const GEN_KEYS: [&str; 11] = [
    "out",
    "seed",
    "n-speakers",
    "utts-per-speaker",
    "spoofs-per-speaker",
    "d-spk",
    "d-cm",
    "sigma-between",
    "sigma-within",
    "artifact-strength",
    "cm-margin",
];

fn cmd_gen(args: GenArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => ConfigFile::load(path, &GEN_KEYS)?,
        None => ConfigFile::empty(),
    };
    let defaults = CohortSpec::default();
    let spec = CohortSpec {
        seed: cfg.resolve(args.seed, "seed")?.unwrap_or(defaults.seed),
        n_speakers: cfg
            .resolve(args.n_speakers, "n-speakers")?
            .unwrap_or(defaults.n_speakers),
        utterances_per_speaker: cfg
            .resolve(args.utts_per_speaker, "utts-per-speaker")?
            .unwrap_or(defaults.utterances_per_speaker),
        spoofs_per_speaker: cfg
            .resolve(args.spoofs_per_speaker, "spoofs-per-speaker")?
            .unwrap_or(defaults.spoofs_per_speaker),
        d_spk: cfg.resolve(args.d_spk, "d-spk")?.unwrap_or(defaults.d_spk),
        d_cm: cfg.resolve(args.d_cm, "d-cm")?.unwrap_or(defaults.d_cm),
        sigma_between: cfg
            .resolve(args.sigma_between, "sigma-between")?
            .unwrap_or(defaults.sigma_between),
        sigma_within: cfg
            .resolve(args.sigma_within, "sigma-within")?
            .unwrap_or(defaults.sigma_within),
        artifact_strength: cfg
            .resolve(args.artifact_strength, "artifact-strength")?
            .unwrap_or(defaults.artifact_strength),
        cm_logit_margin: cfg
            .resolve(args.cm_margin, "cm-margin")?
            .unwrap_or(defaults.cm_logit_margin),
    };
    let out_dir = cfg
        .resolve_path(args.out, "out")
        .context("missing --out directory")?;

    let cohort = generate(&spec)?;
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let writes: [(&str, Vec<u8>); 4] = [
        ("protocol.txt", cohort.protocol.to_text().into_bytes()),
        ("speaker_embeddings.bin", cohort.spk_store.to_bytes()),
        ("cm_embeddings.bin", cohort.cm_store.to_bytes()),
        ("cm_logits.bin", cohort.cm_outputs.to_bytes()),
    ];
    for (name, bytes) in writes {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    let counts = cohort.protocol.counts();
    println!(
        "cohort: {} speakers, {} trials (target {}, nontarget {}, spoof {})",
        spec.n_speakers,
        counts.total(),
        counts.target,
        counts.nontarget,
        counts.spoof
    );
    Ok(())
}

// ---------------------------------------------------------------------
// score
// ---------------------------------------------------------------------

#[derive(Args)]
struct ScoreArgs {
    /// Trial protocol file
    #[arg(long)]
    protocol: Option<PathBuf>,
    /// Speaker embedding store
    #[arg(long)]
    spk_emb: Option<PathBuf>,
    /// Countermeasure logit file (b1 / b1v2)
    #[arg(long)]
    cm_logits: Option<PathBuf>,
    /// Countermeasure embedding store (b2)
    #[arg(long)]
    cm_emb: Option<PathBuf>,
    /// Trained fusion model file (b2)
    #[arg(long)]
    model: Option<PathBuf>,
    /// asv-only, b1, b1v2 or b2
    #[arg(long)]
    backend: Option<Backend>,
    /// Score file to write
    #[arg(long)]
    out: Option<PathBuf>,
    /// key = value file; flags override config values
    #[arg(long)]
    config: Option<PathBuf>,
}

const SCORE_KEYS: [&str; 7] = [
    "protocol", "spk-emb", "cm-logits", "cm-emb", "model", "backend", "out",
];

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => ConfigFile::load(path, &SCORE_KEYS)?,
        None => ConfigFile::empty(),
    };
    let backend = cfg
        .resolve(args.backend, "backend")?
        .context("missing --backend (asv-only, b1, b1v2 or b2)")?;
    let protocol_path = cfg
        .resolve_path(args.protocol, "protocol")
        .context("missing --protocol")?;
    let spk_path = cfg
        .resolve_path(args.spk_emb, "spk-emb")
        .context("missing --spk-emb")?;
    let out_path = cfg.resolve_path(args.out, "out").context("missing --out")?;

    let protocol = load_protocol(&protocol_path)?;
    let spk = load_embeddings(&spk_path)?;

    let cm_outputs = match backend {
        Backend::B1 | Backend::B1V2 => Some(load_cm_outputs(
            &cfg.resolve_path(args.cm_logits, "cm-logits")
                .with_context(|| format!("backend {backend} needs --cm-logits"))?,
        )?),
        _ => None,
    };
    let (cm_emb, model) = if backend == Backend::B2 {
        let cm = load_embeddings(
            &cfg.resolve_path(args.cm_emb, "cm-emb")
                .context("backend b2 needs --cm-emb")?,
        )?;
        let model = load_model(
            &cfg.resolve_path(args.model, "model")
                .context("backend b2 needs --model")?,
        )?;
        (Some(cm), Some(model))
    } else {
        (None, None)
    };

    let inputs = ScoringInputs {
        spk: &spk,
        cm_outputs: cm_outputs.as_ref(),
        cm_emb: cm_emb.as_ref(),
        model: model.as_ref(),
    };
    let mut scored = score_protocol(&protocol, backend, &inputs)?;
    // report from wire precision, so re-evaluating the written file
    // reproduces it exactly
    round_to_wire_precision(&mut scored);

    std::fs::write(&out_path, scores_to_string(&scored))
        .with_context(|| format!("writing {}", out_path.display()))?;
    println!("wrote {}", out_path.display());
    println!("{}", report_line(&scored)?);
    Ok(())
}

fn report_line(scored: &[ScoredTrial]) -> Result<EerReport> {
    Ok(all_eers(scored)?)
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

#[derive(Args)]
struct TrainArgs {
    /// Trial protocol file (training labels)
    #[arg(long)]
    protocol: Option<PathBuf>,
    /// Speaker embedding store
    #[arg(long)]
    spk_emb: Option<PathBuf>,
    /// Countermeasure embedding store
    #[arg(long)]
    cm_emb: Option<PathBuf>,
    /// Model file to write
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch loss CSV (default: `<out>.loss.csv`)
    #[arg(long)]
    loss_out: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Comma-separated hidden layer widths, e.g. 256,128,64
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    leaky_slope: Option<f32>,
    /// Comma-separated loss weights `target,nontarget`
    #[arg(long)]
    class_weights: Option<String>,
    /// key = value file; flags override config values
    #[arg(long)]
    config: Option<PathBuf>,
}

const TRAIN_KEYS: [&str; 12] = [
    "protocol",
    "spk-emb",
    "cm-emb",
    "out",
    "loss-out",
    "lr",
    "batch-size",
    "epochs",
    "seed",
    "weight-decay",
    "hidden",
    "leaky-slope",
];

fn parse_usize_list(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .with_context(|| format!("`{part}` is not a layer width"))
        })
        .collect()
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => ConfigFile::load(path, &TRAIN_KEYS)?,
        None => ConfigFile::empty(),
    };
    let protocol_path = cfg
        .resolve_path(args.protocol, "protocol")
        .context("missing --protocol")?;
    let spk_path = cfg
        .resolve_path(args.spk_emb, "spk-emb")
        .context("missing --spk-emb")?;
    let cm_path = cfg
        .resolve_path(args.cm_emb, "cm-emb")
        .context("missing --cm-emb")?;
    let out_path = cfg.resolve_path(args.out, "out").context("missing --out")?;
    let loss_path = cfg
        .resolve_path(args.loss_out, "loss-out")
        .unwrap_or_else(|| PathBuf::from(format!("{}.loss.csv", out_path.display())));

    let defaults = TrainConfig::default();
    let train_cfg = TrainConfig {
        learning_rate: cfg.resolve(args.lr, "lr")?.unwrap_or(defaults.learning_rate),
        batch_size: cfg
            .resolve(args.batch_size, "batch-size")?
            .unwrap_or(defaults.batch_size),
        epochs: cfg.resolve(args.epochs, "epochs")?.unwrap_or(defaults.epochs),
        seed: cfg.resolve(args.seed, "seed")?.unwrap_or(defaults.seed),
        weight_decay: cfg
            .resolve(args.weight_decay, "weight-decay")?
            .unwrap_or(defaults.weight_decay),
        class_weights: match args.class_weights {
            None => None,
            Some(raw) => {
                let parts: Vec<f64> = raw
                    .split(',')
                    .map(|p| {
                        p.trim()
                            .parse::<f64>()
                            .with_context(|| format!("`{p}` is not a class weight"))
                    })
                    .collect::<Result<_>>()?;
                if parts.len() != 2 {
                    bail!("--class-weights expects exactly two values `target,nontarget`");
                }
                Some([parts[0], parts[1]])
            }
        },
    };
    let arch_defaults = MlpArchitecture::default();
    let arch = MlpArchitecture {
        hidden: match cfg.resolve(args.hidden, "hidden")? {
            Some(raw) => parse_usize_list(&raw)?,
            None => arch_defaults.hidden,
        },
        leaky_slope: cfg
            .resolve(args.leaky_slope, "leaky-slope")?
            .unwrap_or(arch_defaults.leaky_slope),
    };

    let protocol = load_protocol(&protocol_path)?;
    let spk = load_embeddings(&spk_path)?;
    let cm = load_embeddings(&cm_path)?;
    let data = assemble_training_data(&protocol, &spk, &cm)?;

    let report = mlp_train(&data, &arch, &train_cfg)?;

    std::fs::write(&out_path, report.model.to_bytes())
        .with_context(|| format!("writing {}", out_path.display()))?;
    let mut loss_csv = String::from("epoch,loss\n");
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        loss_csv.push_str(&format!("{},{}\n", i + 1, format_sig(*loss, 9)));
    }
    std::fs::write(&loss_path, loss_csv)
        .with_context(|| format!("writing {}", loss_path.display()))?;

    println!("wrote {}", out_path.display());
    println!("wrote {}", loss_path.display());
    println!(
        "trained {} epochs on {} examples, final loss {}",
        report.epoch_losses.len(),
        data.len(),
        format_sig(*report.epoch_losses.last().unwrap(), 9)
    );
    Ok(())
}

// ---------------------------------------------------------------------
// det
// ---------------------------------------------------------------------

#[derive(Args)]
struct DetArgs {
    /// Output directory for CSV/SVG files
    #[arg(long)]
    out: Option<PathBuf>,
    /// One or more score files; two or more also produce an overlay SVG
    #[arg(required = true, num_args = 1..)]
    scores: Vec<PathBuf>,
    /// key = value file; flags override config values
    #[arg(long)]
    config: Option<PathBuf>,
}

const DET_KEYS: [&str; 1] = ["out"];

fn cmd_det(args: DetArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => ConfigFile::load(path, &DET_KEYS)?,
        None => ConfigFile::empty(),
    };
    let out_dir = cfg
        .resolve_path(args.out, "out")
        .context("missing --out directory")?;
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let mut systems = Vec::new();
    for path in &args.scores {
        let bytes =
            std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let scored =
            parse_scores(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        let points = sweep(&scored, MetricKind::Sasv)
            .with_context(|| format!("sweeping {}", path.display()))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "system".to_string());

        let csv_path = out_dir.join(format!("{name}_det.csv"));
        std::fs::write(&csv_path, det_csv(&points))
            .with_context(|| format!("writing {}", csv_path.display()))?;
        println!("wrote {}", csv_path.display());

        let system = DetSystem { name: name.clone(), points };
        let svg_path = out_dir.join(format!("{name}_det.svg"));
        std::fs::write(&svg_path, det_svg(std::slice::from_ref(&system)))
            .with_context(|| format!("writing {}", svg_path.display()))?;
        println!("wrote {}", svg_path.display());

        systems.push(system);
    }

    if systems.len() > 1 {
        let overlay_path = out_dir.join("det_overlay.svg");
        std::fs::write(&overlay_path, det_svg(&systems))
            .with_context(|| format!("writing {}", overlay_path.display()))?;
        println!("wrote {}", overlay_path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------

#[derive(Args)]
struct EvalArgs {
    /// Score file to evaluate
    scores: PathBuf,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let bytes = std::fs::read(&args.scores)
        .with_context(|| format!("reading {}", args.scores.display()))?;
    let scored =
        parse_scores(&bytes).with_context(|| format!("parsing {}", args.scores.display()))?;
    println!("{}", all_eers(&scored)?);
    Ok(())
}

// ---------------------------------------------------------------------
// shared loaders
// ---------------------------------------------------------------------

fn load_protocol(path: &Path) -> Result<Protocol> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Protocol::parse(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    EmbeddingStore::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn load_cm_outputs(path: &Path) -> Result<CmOutputs> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    CmOutputs::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn load_model(path: &Path) -> Result<MlpFusionModel> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    MlpFusionModel::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))
}
