use std::fs;
use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::eval::evaluate;
use super::infer::NetPredictor;
use crate::datagen::{CorpusEntry, CorpusManifest, SongData, Split, TrainingExample};
use crate::error::{Error, Result};
use crate::nn::{
    clip_gradients, gru_hidden_init, mse_loss, save_checkpoint, AdamState, AutotunerNet, Gradients,
    NetArch,
};

pub const BEST_CHECKPOINT: &str = "best.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub songs_seen: usize,
    pub epochs: usize,
    /// Last end-of-epoch training MSE.
    pub train_mse: Option<f64>,
    pub best_val_mse: Option<f64>,
    pub checkpoints_written: usize,
    pub checkpoint: PathBuf,
}

struct Metrics {
    file: fs::File,
    path: PathBuf,
}

impl Metrics {
    fn create(path: PathBuf) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(file, "step,song,note,train_mse,val_mse,cents")
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self { file, path })
    }

    fn row(
        &mut self,
        step: usize,
        song: &str,
        note: Option<usize>,
        train: Option<f64>,
        val: Option<f64>,
    ) -> Result<()> {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.8}")).unwrap_or_default();
        let cents = train.or(val).map(|m| 100.0 * m.sqrt());
        let note = note.map(|n| n.to_string()).unwrap_or_default();
        writeln!(
            self.file,
            "{step},{song},{note},{},{},{}",
            fmt(train),
            fmt(val),
            fmt(cents)
        )
        .map_err(|e| Error::io(&self.path, e))
    }
}

/// One optimizer step on note `index` of every version. Updates each
/// version's carried hidden state and returns the minibatch MSE, or `None`
/// for notes too short to run.
pub fn train_note_step(
    net: &mut AutotunerNet<f32>,
    adam: &mut AdamState<f32>,
    versions: &[TrainingExample],
    hidden: &mut [Vec<f32>],
    index: usize,
    clip: f64,
) -> Result<Option<f64>> {
    let inputs: Vec<_> = versions.iter().map(|v| &v.notes[index]).collect();
    if inputs.iter().any(|n| n.input.frames < net.arch.min_frames) {
        return Ok(None);
    }
    let mut grads = Gradients::zeros_like(net);
    let mut preds = Vec::with_capacity(inputs.len());
    let targets: Vec<f32> = inputs.iter().map(|n| n.target as f32).collect();
    let scale = 2.0 / inputs.len() as f32;
    for (v, n) in inputs.iter().enumerate() {
        let x = AutotunerNet::<f32>::volume_from_input(&n.input)?;
        let trace = net.forward_trace(&x, &hidden[v])?;
        grads.add_assign(&net.backward(&trace, scale * (trace.output - targets[v]))?);
        preds.push(trace.output);
        hidden[v] = trace.hidden;
    }
    let (loss, _) = mse_loss(&preds, &targets)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss at note {index}")));
    }
    clip_gradients(&mut grads, clip)?;
    adam.update(net.params_mut(), &grads)?;
    Ok(Some(loss as f64))
}

fn load_songs(root: &std::path::Path, entries: &[&CorpusEntry]) -> Result<Vec<SongData>> {
    entries.iter().map(|e| SongData::load(root, e)).collect()
}

/// Trains from scratch on the manifest's train split, validating every
/// `validation_every` songs and keeping the best checkpoint.
pub fn cmd_train(config: &TrainConfig) -> Result<TrainSummary> {
    config.validate()?;
    let (manifest, root) = CorpusManifest::load(&config.manifest)?;
    let train_entries: Vec<&CorpusEntry> = manifest.split(Split::Train).collect();
    if train_entries.is_empty() {
        return Err(Error::Config("corpus has no training songs".into()));
    }
    if manifest.cqt.truncated_bins() != NetArch::table1().input_bins {
        return Err(Error::Config(
            "corpus CQT height does not match the network input".into(),
        ));
    }
    if let Some(e) = train_entries
        .iter()
        .find(|e| e.version_seeds.len() < config.versions)
    {
        return Err(Error::Config(format!(
            "{} has {} versions, config needs {}",
            e.id,
            e.version_seeds.len(),
            config.versions
        )));
    }
    let val_entries: Vec<&CorpusEntry> = manifest.split(Split::Validation).collect();
    let val_songs = load_songs(&root, &val_entries)?;
    fs::create_dir_all(&config.checkpoint_dir).map_err(|e| Error::io(&config.checkpoint_dir, e))?;
    let checkpoint = config.checkpoint_dir.join(BEST_CHECKPOINT);
    let mut metrics = Metrics::create(config.metrics_path())?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = AutotunerNet::<f32>::he_init(NetArch::table1(), &mut rng)?;
    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(config.adam(), &sizes);
    let mut summary = TrainSummary {
        steps: 0,
        songs_seen: 0,
        epochs: 0,
        train_mse: None,
        best_val_mse: None,
        checkpoints_written: 0,
        checkpoint: checkpoint.clone(),
    };
    let mut since_validation = 0;
    let mut order: Vec<usize> = (0..train_entries.len()).collect();
    let max_steps = config.max_steps.unwrap_or(usize::MAX);

    let validate = |net: &AutotunerNet<f32>,
                    adam: &AdamState<f32>,
                    summary: &mut TrainSummary,
                    metrics: &mut Metrics|
     -> Result<()> {
        if val_songs.is_empty() {
            return Ok(());
        }
        let report = evaluate(
            &val_songs,
            &mut NetPredictor::new(net),
            Some(Split::Validation),
        )?;
        metrics.row(summary.steps, "validation", None, None, Some(report.mse))?;
        log::info!(
            "step {}: validation MSE {:.5} ({:.1} cents)",
            summary.steps,
            report.mse,
            report.cents
        );
        if summary.best_val_mse.is_none_or(|b| report.mse < b) {
            summary.best_val_mse = Some(report.mse);
            let meta = serde_json::json!({
                "step": summary.steps,
                "songs": summary.songs_seen,
                "val_mse": report.mse,
            });
            save_checkpoint(&checkpoint, net, Some(adam), meta)?;
            summary.checkpoints_written += 1;
        }
        Ok(())
    };

    'epochs: for epoch in 0..config.max_epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(
            config.seed ^ (epoch as u64 + 1),
        ));
        for &i in &order {
            if summary.steps >= max_steps {
                break 'epochs;
            }
            let song = SongData::load(&root, train_entries[i])?;
            let examples: Vec<TrainingExample> =
                song.examples()?.into_iter().take(config.versions).collect();
            let h0: Vec<f32> = gru_hidden_init(net.arch.hidden, &mut rng);
            let mut hidden = vec![h0; examples.len()];
            for note in 0..song.notes.len() {
                if summary.steps >= max_steps {
                    break;
                }
                if let Some(loss) = train_note_step(
                    &mut net,
                    &mut adam,
                    &examples,
                    &mut hidden,
                    note,
                    config.clip,
                )? {
                    summary.steps += 1;
                    metrics.row(summary.steps, &song.id, Some(note), Some(loss), None)?;
                }
            }
            summary.songs_seen += 1;
            since_validation += 1;
            if since_validation == config.validation_every {
                since_validation = 0;
                validate(&net, &adam, &mut summary, &mut metrics)?;
            }
        }
        summary.epochs = epoch + 1;
        if let Some(target) = config.target_train_mse {
            let songs = load_songs(&root, &train_entries)?;
            let report = evaluate(&songs, &mut NetPredictor::new(&net), Some(Split::Train))?;
            log::info!("epoch {}: training MSE {:.5}", epoch + 1, report.mse);
            summary.train_mse = Some(report.mse);
            if report.mse < target {
                break;
            }
        }
    }
    if since_validation > 0 || summary.best_val_mse.is_none() {
        validate(&net, &adam, &mut summary, &mut metrics)?;
    }
    if val_songs.is_empty() {
        log::warn!("no validation split; saving the final model");
        let meta = serde_json::json!({ "step": summary.steps, "songs": summary.songs_seen });
        save_checkpoint(&checkpoint, &net, Some(&adam), meta)?;
        summary.checkpoints_written += 1;
    }
    Ok(summary)
}
