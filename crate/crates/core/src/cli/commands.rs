use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::dataset::{branch_examples, fusion_examples, load_utterances, Utterance};
use super::manifest::{load_manifest, Manifest};
use super::synth::{generate_synthetic, SynthKind, SynthSpec};
use super::{read_file, write_atomic};
use crate::audio::{tensor, wav_to_frames};
use crate::ctc::{self, PosteriorMatrix};
use crate::fusion::{train_fusion, FusionModel, UtterancePrediction};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::model::{train, EncoderShape, ModelShape, SeqInput, TrainConfig};
use crate::{checkpoint, emotion_index, Error, Result, EMOTIONS};

#[derive(Debug, Parser)]
#[command(name = "emoseq", version, about = "Framewise emotion recognition toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a WAV file to a tensor file of 3x40x40 frames.
    Frames(FramesArgs),
    /// Train modality branches and the fusion head from a manifest.
    Train(TrainArgs),
    /// Score a checkpoint (or an existing predictions CSV) on a manifest split.
    Eval(EvalArgs),
    /// Best-path and constrained decoding of a posterior matrix CSV.
    Decode(DecodeArgs),
    /// Generate a seeded synthetic dataset with its manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct FramesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a long-format CSV dump of every frame value.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file, applied before any other flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config key; applied last. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub manifest: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long)]
    pub loss_trace: Option<String>,
    #[arg(long)]
    pub modalities: Option<String>,
    #[arg(long)]
    pub loss_mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub fusion_epochs: Option<String>,
    #[arg(long)]
    pub joint: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub manifest: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Score this predictions CSV instead of running a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    pub from_predictions: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<String>,
    #[arg(long)]
    pub predictions: Option<String>,
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub posteriors: PathBuf,
    /// Blank column, by header name or index. Defaults to the last column.
    #[arg(long)]
    pub blank: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `separable_tones` or `complementary_modalities`.
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Every N-th utterance goes to the test split; 0 keeps all in train.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses and runs `args` (including the program name), writing command
/// output to `out`. Parse failures, including `--help`, become usage errors.
pub fn run_args<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Usage(e.to_string()))?;
    run(cli, out)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Frames(a) => run_frames(&a, out),
        Command::Train(a) => run_train(&a, out),
        Command::Eval(a) => run_eval(&a, out),
        Command::Decode(a) => run_decode(&a, out),
        Command::Synth(a) => run_synth(&a, out),
    }
}

fn say(out: &mut dyn Write, text: &str) {
    let _ = writeln!(out, "{text}");
}

fn resolve_config(args: &ConfigArgs, flags: &[(&str, &Option<String>)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for s in &args.set {
        cfg.apply_override(s)?;
    }
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(cfg)
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Usage(format!("{key} is required (flag or config key)")))
}

fn run_frames(a: &FramesArgs, out: &mut dyn Write) -> Result<()> {
    let seq = wav_to_frames(&a.input)?;
    let t = tensor::frames_to_tensor(&seq);
    let csv = a.csv.as_ref().map(|_| tensor::frames_to_csv(&seq));
    write_atomic(&a.out, &tensor::encode(&t))?;
    if let (Some(path), Some(csv)) = (&a.csv, csv) {
        write_atomic(path, csv.as_bytes())?;
    }
    say(out, &format!("{} frames -> {}", seq.len(), a.out.display()));
    Ok(())
}

fn slot_indices(manifest: &Manifest, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            manifest.modality_index(n).ok_or_else(|| {
                Error::Validation(format!(
                    "manifest {} has no modality column {n:?}",
                    manifest.path.display()
                ))
            })
        })
        .collect()
}

fn branch_shape(cfg: &RunConfig, utterances: &[Utterance], slot: usize, name: &str) -> Result<ModelShape> {
    let sample = utterances
        .iter()
        .flat_map(|u| u.intervals.iter())
        .find_map(|iv| iv[slot].as_ref())
        .ok_or_else(|| Error::EmptyInput(format!("no training data for modality {name:?}")))?;
    let (encoder, input_dim) = match sample {
        SeqInput::Frames(_) => (
            Some(EncoderShape {
                conv1_channels: cfg.conv1_channels,
                conv2_channels: cfg.conv2_channels,
                embed_dim: cfg.embed_dim,
            }),
            cfg.embed_dim,
        ),
        SeqInput::Embeddings(e) => (None, e[0].len()),
    };
    Ok(ModelShape {
        emotions: EMOTIONS.len(),
        encoder,
        input_dim,
        hidden: cfg.hidden,
        loss_mode: cfg.train.loss_mode,
    })
}

fn run_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(
        &a.config,
        &[
            ("manifest", &a.manifest),
            ("checkpoint", &a.checkpoint),
            ("loss_trace", &a.loss_trace),
            ("modalities", &a.modalities),
            ("loss_mode", &a.loss_mode),
            ("epochs", &a.epochs),
            ("learning_rate", &a.learning_rate),
            ("batch_size", &a.batch_size),
            ("seed", &a.seed),
            ("fusion_epochs", &a.fusion_epochs),
            ("joint", &a.joint),
        ],
    )?;
    let manifest = load_manifest(required(&cfg.manifest, "manifest")?)?;
    let checkpoint_path = required(&cfg.checkpoint, "checkpoint")?.to_path_buf();
    let trace_path = cfg
        .loss_trace
        .clone()
        .unwrap_or_else(|| checkpoint_path.with_extension("loss.csv"));
    let names = if cfg.modalities.is_empty() {
        manifest.modalities.clone()
    } else {
        cfg.modalities.clone()
    };
    let slots = slot_indices(&manifest, &names)?;
    let utterances = load_utterances(&manifest, "train", &slots)?;
    if utterances.is_empty() {
        return Err(Error::EmptyInput("manifest has no train rows".into()));
    }

    let mut trace = String::from("stage,epoch,loss\n");
    let mut branches = Vec::new();
    for (slot, name) in names.iter().enumerate() {
        let shape = branch_shape(&cfg, &utterances, slot, name)?;
        let config = TrainConfig {
            seed: cfg.train.seed.wrapping_add(slot as u64),
            ..cfg.train.clone()
        };
        let outcome = train(&shape, &config, &branch_examples(&utterances, slot))?;
        for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
            let _ = writeln!(trace, "branch:{name},{epoch},{loss}");
        }
        say(
            out,
            &format!(
                "branch {name}: final loss {}",
                outcome.loss_trace.last().copied().unwrap_or(f64::NAN)
            ),
        );
        branches.push((name.clone(), outcome.model));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.fusion.seed);
    let model = FusionModel::new(branches, &mut rng)?;
    let outcome = train_fusion(model, &cfg.fusion, &fusion_examples(&utterances))?;
    for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
        let _ = writeln!(trace, "fusion,{epoch},{loss}");
    }
    say(
        out,
        &format!(
            "fusion: final loss {}",
            outcome.loss_trace.last().copied().unwrap_or(f64::NAN)
        ),
    );
    write_atomic(&checkpoint_path, &checkpoint::encode(&outcome.model))?;
    write_atomic(&trace_path, trace.as_bytes())?;
    say(out, &format!("checkpoint -> {}", checkpoint_path.display()));
    Ok(())
}

struct Scored {
    utterance_id: String,
    truth: usize,
    arousal: f64,
    valence: f64,
    prediction: UtterancePrediction,
}

fn run_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(
        &a.config,
        &[
            ("manifest", &a.manifest),
            ("checkpoint", &a.checkpoint),
            ("metrics", &a.metrics),
            ("predictions", &a.predictions),
            ("split", &a.split),
        ],
    )?;
    let manifest = load_manifest(required(&cfg.manifest, "manifest")?)?;
    let scored = match &a.from_predictions {
        Some(path) => score_predictions_file(&manifest, &cfg.split, path)?,
        None => score_checkpoint(&manifest, &cfg.split, required(&cfg.checkpoint, "checkpoint")?)?,
    };
    if scored.is_empty() {
        return Err(Error::EmptyInput(format!("split {:?} has no rows", cfg.split)));
    }
    let classes = scored[0].prediction.class_probs.len().max(EMOTIONS.len());
    let truth: Vec<usize> = scored.iter().map(|s| s.truth).collect();
    let predicted: Vec<usize> = scored.iter().map(|s| s.prediction.predicted_class).collect();
    let cm = ConfusionMatrix::from_labels(&truth, &predicted, classes)?;
    let pa: Vec<f64> = scored.iter().map(|s| s.prediction.arousal).collect();
    let ta: Vec<f64> = scored.iter().map(|s| s.arousal).collect();
    let pv: Vec<f64> = scored.iter().map(|s| s.prediction.valence).collect();
    let tv: Vec<f64> = scored.iter().map(|s| s.valence).collect();
    let report = MetricsReport::compute(&cm, (&pa, &ta), (&pv, &tv))?;
    let json = serde_json::to_string_pretty(&report).expect("metrics serialize") + "\n";

    let predictions_csv = cfg.predictions.as_ref().map(|_| predictions_csv(&scored));
    if let (Some(path), Some(csv)) = (&cfg.predictions, predictions_csv) {
        write_atomic(path, csv.as_bytes())?;
    }
    match &cfg.metrics {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None => {
            let _ = out.write_all(json.as_bytes());
        }
    }
    if cfg.metrics.is_some() {
        say(out, &format!("unweighted_accuracy {}", report.unweighted_accuracy));
    }
    Ok(())
}

fn score_checkpoint(manifest: &Manifest, split: &str, path: &Path) -> Result<Vec<Scored>> {
    let model = checkpoint::decode(&read_file(path)?)?;
    let names: Vec<String> = model.slots.iter().map(|s| s.name.clone()).collect();
    let slots = slot_indices(manifest, &names)?;
    load_utterances(manifest, split, &slots)?
        .into_iter()
        .map(|u| {
            Ok(Scored {
                prediction: model.predict_utterance(&u.intervals)?,
                utterance_id: u.utterance_id,
                truth: u.class,
                arousal: u.arousal,
                valence: u.valence,
            })
        })
        .collect()
}

fn predictions_csv(scored: &[Scored]) -> String {
    let classes = scored[0].prediction.class_probs.len();
    let mut s = String::from("utterance_id");
    for k in 0..classes {
        let _ = write!(s, ",{}", EMOTIONS.get(k).copied().unwrap_or("extra"));
    }
    s.push_str(",predicted,arousal,valence\n");
    for r in scored {
        s.push_str(&r.utterance_id);
        for p in &r.prediction.class_probs {
            let _ = write!(s, ",{p}");
        }
        let label = EMOTIONS.get(r.prediction.predicted_class).copied().unwrap_or("extra");
        let _ = writeln!(s, ",{label},{},{}", r.prediction.arousal, r.prediction.valence);
    }
    s
}

fn parse_error(path: &Path, line: u64, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

fn score_predictions_file(manifest: &Manifest, split: &str, path: &Path) -> Result<Vec<Scored>> {
    let bytes = read_file(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, 1, "", e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_error(path, 1, name, "missing column"))
    };
    let (id_col, pred_col, a_col, v_col) = (
        col("utterance_id")?,
        col("predicted")?,
        col("arousal")?,
        col("valence")?,
    );
    let prob_cols: Vec<usize> = EMOTIONS
        .iter()
        .filter_map(|e| headers.iter().position(|h| h == *e))
        .collect();

    let mut by_id = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_error(path, e.position().map_or(0, |p| p.line()), "", e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |c: usize, name: &str| -> Result<f64> {
            record[c]
                .parse()
                .map_err(|_| parse_error(path, line, name, format!("{:?} is not a number", &record[c])))
        };
        let predicted_class = emotion_index(&record[pred_col]).ok_or_else(|| {
            parse_error(
                path,
                line,
                "predicted",
                format!("unknown emotion {:?}", &record[pred_col]),
            )
        })?;
        let class_probs = prob_cols
            .iter()
            .map(|&c| num(c, &headers[c]))
            .collect::<Result<Vec<_>>>()?;
        let prediction = UtterancePrediction {
            class_probs,
            predicted_class,
            arousal: num(a_col, "arousal")?,
            valence: num(v_col, "valence")?,
        };
        if by_id.insert(record[id_col].to_string(), prediction).is_some() {
            return Err(parse_error(
                path,
                line,
                "utterance_id",
                format!("duplicate id {:?}", &record[id_col]),
            ));
        }
    }
    manifest
        .rows_in_split(split)
        .map(|row| {
            let prediction = by_id
                .remove(&row.utterance_id)
                .ok_or_else(|| Error::Validation(format!("no prediction for utterance {:?}", row.utterance_id)))?;
            Ok(Scored {
                utterance_id: row.utterance_id.clone(),
                truth: row.class,
                arousal: row.arousal,
                valence: row.valence,
                prediction,
            })
        })
        .collect()
}

/// Reads a posterior CSV: one row per frame, one column per symbol, with an
/// optional header row of symbol names.
fn read_posteriors(path: &Path) -> Result<(Vec<String>, PosteriorMatrix)> {
    let text = String::from_utf8(read_file(path)?).map_err(|_| parse_error(path, 1, "", "not UTF-8"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let split = |l: &str| l.split(',').map(|c| c.trim().to_string()).collect::<Vec<_>>();
    let mut names = None;
    if let Some((_, first)) = lines.peek() {
        if split(first).iter().any(|c| c.parse::<f64>().is_err()) {
            names = Some(split(first));
            lines.next();
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines {
        let row = split(line)
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>()
                    .map_err(|_| parse_error(path, i as u64 + 1, &c.to_string(), format!("{v:?} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(prev) = rows.first() {
            if prev.len() != row.len() {
                return Err(parse_error(
                    path,
                    i as u64 + 1,
                    "",
                    "row width differs from the first row",
                ));
            }
        }
        rows.push(row);
    }
    let width = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || width == 0 {
        return Err(Error::EmptyInput(format!("{} has no posterior rows", path.display())));
    }
    let names = match names {
        Some(n) if n.len() == width => n,
        Some(n) => {
            return Err(parse_error(
                path,
                1,
                "",
                format!("{} header names for {width} columns", n.len()),
            ));
        }
        None if width == EMOTIONS.len() + 1 => EMOTIONS
            .iter()
            .map(|s| s.to_string())
            .chain(["-".to_string()])
            .collect(),
        None => (0..width).map(|i| i.to_string()).collect(),
    };
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let y = PosteriorMatrix::new(Array2::from_shape_vec((flat.len() / width, width), flat).expect("rectangular"))?;
    Ok((names, y))
}

fn run_decode(a: &DecodeArgs, out: &mut dyn Write) -> Result<()> {
    let (names, y) = read_posteriors(&a.posteriors)?;
    let blank = match &a.blank {
        None => names.len() - 1,
        Some(b) => names
            .iter()
            .position(|n| n == b)
            .or_else(|| b.parse().ok().filter(|&i: &usize| i < names.len()))
            .ok_or_else(|| Error::Usage(format!("blank {b:?} is not a column")))?,
    };
    let render = |seq: &[usize]| seq.iter().map(|&i| names[i].as_str()).collect::<Vec<_>>().join(" ");
    let (path, labeling) = ctc::best_path_decode(&y, blank);
    let (symbol, p) = ctc::constrained_emotion_decode(&y, blank);
    say(out, &format!("best_path: {}", render(&path)));
    say(out, &format!("labeling: {}", render(&labeling)));
    say(out, &format!("constrained: {} {p}", names[symbol]));
    Ok(())
}

fn run_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let kind = SynthKind::parse(&a.kind).ok_or_else(|| Error::Usage(format!("unknown synthetic kind {:?}", a.kind)))?;
    let spec = SynthSpec {
        kind,
        n: a.n,
        seed: a.seed,
        classes: a.classes,
        holdout: a.holdout,
    };
    let manifest = generate_synthetic(&spec, &a.out).map_err(|e| match e {
        Error::Validation(m) => Error::Usage(m),
        other => other,
    })?;
    say(out, &format!("manifest -> {}", manifest.display()));
    Ok(())
}
