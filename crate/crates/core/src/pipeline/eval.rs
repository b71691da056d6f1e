use std::path::Path;

use serde::{Deserialize, Serialize};

use super::infer::{NetPredictor, NotePredictor};
use crate::datagen::{CorpusManifest, SongData, Split};
use crate::error::{Error, Result};
use crate::nn::{cents_from_mse, load_checkpoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteResidual {
    pub song: String,
    pub version: usize,
    pub note: usize,
    pub target: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Option<Split>,
    pub notes: usize,
    /// Notes too short for the network.
    pub skipped: usize,
    /// Semitones squared.
    pub mse: f64,
    pub cents: f64,
    /// Fraction of notes where prediction and target have the same sign.
    pub sign_agreement: f64,
    pub residuals: Vec<NoteResidual>,
}

fn sign(x: f64) -> i8 {
    if x.abs() < 1e-12 {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

impl EvalReport {
    pub fn from_residuals(
        split: Option<Split>,
        residuals: Vec<NoteResidual>,
        skipped: usize,
    ) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::Domain("no evaluable notes".into()));
        }
        let n = residuals.len() as f64;
        let mse = residuals
            .iter()
            .map(|r| (r.prediction - r.target).powi(2))
            .sum::<f64>()
            / n;
        let agree = residuals
            .iter()
            .filter(|r| sign(r.prediction) == sign(r.target))
            .count() as f64
            / n;
        Ok(Self {
            split,
            notes: residuals.len(),
            skipped,
            mse,
            cents: cents_from_mse(mse)?,
            sign_agreement: agree,
            residuals,
        })
    }
}

/// Runs `predictor` over every detuned version of every song.
pub fn evaluate(
    songs: &[SongData],
    predictor: &mut dyn NotePredictor,
    split: Option<Split>,
) -> Result<EvalReport> {
    let mut residuals = Vec::new();
    let mut skipped = 0;
    for song in songs {
        for example in song.examples()? {
            predictor.reset();
            for (i, n) in example.notes.iter().enumerate() {
                match predictor.predict(&n.input)? {
                    Some(p) => residuals.push(NoteResidual {
                        song: song.id.clone(),
                        version: example.version_index,
                        note: i,
                        target: n.target,
                        prediction: p,
                    }),
                    None => skipped += 1,
                }
            }
        }
    }
    EvalReport::from_residuals(split, residuals, skipped)
}

pub fn load_split(manifest: &Path, split: Split) -> Result<Vec<SongData>> {
    let (m, root) = CorpusManifest::load(manifest)?;
    m.split(split).map(|e| SongData::load(&root, e)).collect()
}

pub fn cmd_eval(manifest: &Path, split: Split, checkpoint: &Path) -> Result<EvalReport> {
    let ck = load_checkpoint(checkpoint)?;
    let songs = load_split(manifest, split)?;
    if songs.is_empty() {
        return Err(Error::Config(format!(
            "split `{}` has no songs",
            split.name()
        )));
    }
    evaluate(&songs, &mut NetPredictor::new(&ck.net), Some(split))
}
