//! Turns manifest rows into interval-level model inputs.

use std::path::Path;

use ndarray::Array1;

use super::manifest::{Manifest, ManifestRow};
use super::read_file;
use crate::audio::{interval_spans, tensor, wav_to_frames};
use crate::fusion::MultimodalExample;
use crate::model::{Example, SeqInput};
use crate::{Error, Result};

/// One utterance split into aligned intervals. `intervals[i][m]` is the
/// input of modality slot `m` in interval `i`.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub utterance_id: String,
    pub class: usize,
    pub arousal: f64,
    pub valence: f64,
    pub intervals: Vec<Vec<Option<SeqInput>>>,
}

/// Loads one modality file: `.wav` goes through the audio front end, anything
/// else is read as a tensor file (frames if shaped 3x40x40, otherwise one
/// embedding per item).
pub fn load_modality(path: &Path) -> Result<SeqInput> {
    let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    if is_wav {
        return Ok(SeqInput::Frames(wav_to_frames(path)?.frames));
    }
    let t = tensor::decode(&read_file(path)?).map_err(|e| annotate(path, e))?;
    if t.is_frames() {
        Ok(SeqInput::Frames(tensor::tensor_to_frames(&t)?.frames))
    } else {
        Ok(SeqInput::Embeddings(
            tensor::tensor_to_embeddings(&t)?
                .into_iter()
                .map(Array1::from)
                .collect(),
        ))
    }
}

fn annotate(path: &Path, e: Error) -> Error {
    match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Splits whole-utterance sequences into intervals. Modalities are cut with
/// the same spans and truncated to the shortest one present.
pub fn split_intervals(utterance_id: &str, inputs: &[Option<SeqInput>]) -> Result<Vec<Vec<Option<SeqInput>>>> {
    let shortest = inputs
        .iter()
        .flatten()
        .map(SeqInput::len)
        .min()
        .ok_or_else(|| Error::EmptyInput(format!("utterance {utterance_id} has no modality files")))?;
    let spans = interval_spans(shortest);
    if spans.is_empty() {
        return Err(Error::TooShort(format!(
            "utterance {utterance_id} has {shortest} frames, too few for one interval"
        )));
    }
    Ok(spans
        .into_iter()
        .map(|span| {
            inputs
                .iter()
                .map(|inp| inp.as_ref().map(|s| s.slice(span.clone())))
                .collect()
        })
        .collect())
}

/// Loads every row of `split` restricted to the given modality columns.
pub fn load_utterances(manifest: &Manifest, split: &str, modalities: &[usize]) -> Result<Vec<Utterance>> {
    manifest
        .rows_in_split(split)
        .map(|row| load_row(row, modalities))
        .collect()
}

fn load_row(row: &ManifestRow, modalities: &[usize]) -> Result<Utterance> {
    let inputs = modalities
        .iter()
        .map(|&m| row.paths[m].as_deref().map(load_modality).transpose())
        .collect::<Result<Vec<_>>>()?;
    Ok(Utterance {
        intervals: split_intervals(&row.utterance_id, &inputs)?,
        utterance_id: row.utterance_id.clone(),
        class: row.class,
        arousal: row.arousal,
        valence: row.valence,
    })
}

/// Interval examples for the branch in slot `slot`.
pub fn branch_examples(utterances: &[Utterance], slot: usize) -> Vec<Example> {
    utterances
        .iter()
        .flat_map(|u| {
            u.intervals.iter().filter_map(move |iv| {
                iv[slot].clone().map(|input| Example {
                    input,
                    class: u.class,
                    regression: Some((u.arousal, u.valence)),
                })
            })
        })
        .collect()
}

pub fn fusion_examples(utterances: &[Utterance]) -> Vec<MultimodalExample> {
    utterances
        .iter()
        .flat_map(|u| {
            u.intervals.iter().map(move |iv| MultimodalExample {
                inputs: iv.clone(),
                class: u.class,
                arousal: u.arousal,
                valence: u.valence,
            })
        })
        .collect()
}
