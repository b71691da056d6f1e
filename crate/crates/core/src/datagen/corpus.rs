use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::detune::{apply_detune, DetuneSpec, DetunedVersion, TrainingExample, VERSIONS};
use super::synth::{synth_performance, SongParams, SongSpec};
use crate::audio::save_wav;
use crate::cqt::{truncate_buffer, CqtParams, CqtPlan, CqtSpectrogram};
use crate::error::{Error, Result};
use crate::pitch::{read_notes_json, write_notes_json, NoteSegment};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub seed: u64,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub versions: usize,
    pub song: SongParams,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train: 10,
            validation: 2,
            test: 2,
            versions: VERSIONS,
            song: SongParams::default(),
        }
    }
}

impl CorpusConfig {
    fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

/// One rendered song. Paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub split: Split,
    pub song_seed: u64,
    pub backing_seed: u64,
    pub vocal: PathBuf,
    pub backing: PathBuf,
    pub notes: PathBuf,
    /// Full-height (buffered) vocal CQT.
    pub vocal_cqt: PathBuf,
    /// Full-height backing CQT.
    pub backing_cqt: PathBuf,
    pub detunes: PathBuf,
    pub version_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub config: CorpusConfig,
    pub cqt: CqtParams,
    pub entries: Vec<CorpusEntry>,
}

impl CorpusManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let path = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Self = serde_json::from_slice(&bytes)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, root))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn check_split_hygiene(&self) -> Result<()> {
        for a in &self.entries {
            if let Some(b) = self
                .entries
                .iter()
                .find(|b| b.split != a.split && b.backing_seed == a.backing_seed)
            {
                return Err(Error::Invariant(format!(
                    "backing {} shared by {} and {}",
                    a.backing_seed, a.id, b.id
                )));
            }
        }
        Ok(())
    }
}

/// Seeds for entry `index` of `split`. Backing seeds carry the split in high
/// bits so splits never share a progression.
fn entry_seeds(seed: u64, split: Split, index: usize, versions: usize) -> (u64, u64, Vec<u64>) {
    let tag = Split::ALL.iter().position(|&s| s == split).unwrap() as u64;
    let backing_seed = (seed << 32) ^ (tag << 28) ^ index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(backing_seed ^ 0x5eed_0000_0000_0000);
    let song_seed = rng.next_u64();
    let version_seeds = (0..versions).map(|_| rng.next_u64()).collect();
    (song_seed, backing_seed, version_seeds)
}

/// Renders every song, computes CQTs and detunes, and writes the manifest.
pub fn build_corpus(out_dir: impl AsRef<Path>, config: &CorpusConfig) -> Result<CorpusManifest> {
    let out_dir = out_dir.as_ref();
    if config.versions == 0 {
        return Err(Error::Config("versions must be at least 1".into()));
    }
    let params = CqtParams::default();
    let plan = CqtPlan::new(params, crate::audio::WORKING_RATE)?;
    let mut entries = Vec::new();
    for split in Split::ALL {
        for index in 0..config.count(split) {
            let (song_seed, backing_seed, version_seeds) =
                entry_seeds(config.seed, split, index, config.versions);
            let id = format!("{}_{index:04}", split.name());
            let rel = PathBuf::from(split.name()).join(&id);
            let dir = out_dir.join(&rel);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let spec = SongSpec::generate(song_seed, backing_seed, &config.song)?;
            let perf = synth_performance(song_seed, &spec)?;
            let vocal_cqt = plan.transform(&perf.vocal)?;
            let backing_cqt = plan.transform(&perf.backing)?;
            let notes: Vec<NoteSegment> = perf
                .notes
                .into_iter()
                .map(|mut n| {
                    n.end_frame = n.end_frame.min(vocal_cqt.frames);
                    n
                })
                .collect();
            let detunes: Vec<DetuneSpec> = version_seeds
                .iter()
                .enumerate()
                .map(|(i, &s)| DetuneSpec::sample(notes.len(), s, i))
                .collect();
            let entry = CorpusEntry {
                id,
                split,
                song_seed,
                backing_seed,
                vocal: rel.join("vocal.wav"),
                backing: rel.join("backing.wav"),
                notes: rel.join("notes.json"),
                vocal_cqt: rel.join("vocal_cqt.f32"),
                backing_cqt: rel.join("backing_cqt.f32"),
                detunes: rel.join("detunes.json"),
                version_seeds,
            };
            save_wav(&perf.vocal, out_dir.join(&entry.vocal))?;
            save_wav(&perf.backing, out_dir.join(&entry.backing))?;
            write_notes_json(&notes, out_dir.join(&entry.notes))?;
            vocal_cqt.write_f32(out_dir.join(&entry.vocal_cqt))?;
            backing_cqt.write_f32(out_dir.join(&entry.backing_cqt))?;
            let path = out_dir.join(&entry.detunes);
            fs::write(&path, serde_json::to_vec_pretty(&detunes)?)
                .map_err(|e| Error::io(&path, e))?;
            log::info!("rendered {} ({} notes)", entry.id, notes.len());
            entries.push(entry);
        }
    }
    let manifest = CorpusManifest {
        config: config.clone(),
        cqt: params,
        entries,
    };
    manifest.check_split_hygiene()?;
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Artifacts of one corpus entry loaded for training or evaluation.
#[derive(Debug, Clone)]
pub struct SongData {
    pub id: String,
    pub vocal_cqt: CqtSpectrogram,
    /// Truncated to model bins.
    pub backing_cqt: CqtSpectrogram,
    pub notes: Vec<NoteSegment>,
    pub detunes: Vec<DetuneSpec>,
}

impl SongData {
    pub fn load(root: &Path, entry: &CorpusEntry) -> Result<Self> {
        let vocal_cqt = CqtSpectrogram::read_f32(root.join(&entry.vocal_cqt))?;
        let backing_cqt =
            truncate_buffer(&CqtSpectrogram::read_f32(root.join(&entry.backing_cqt))?)?;
        let notes = read_notes_json(root.join(&entry.notes))?;
        let path = root.join(&entry.detunes);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let detunes: Vec<DetuneSpec> = serde_json::from_slice(&bytes)?;
        if detunes.len() != entry.version_seeds.len() {
            return Err(Error::Shape(format!(
                "{}: {} detunes for {} version seeds",
                entry.id,
                detunes.len(),
                entry.version_seeds.len()
            )));
        }
        Ok(Self {
            id: entry.id.clone(),
            vocal_cqt,
            backing_cqt,
            notes,
            detunes,
        })
    }

    pub fn versions(&self) -> Result<Vec<DetunedVersion>> {
        self.detunes
            .iter()
            .map(|d| {
                Ok(DetunedVersion {
                    cqt: apply_detune(&self.vocal_cqt, &self.notes, d)?,
                    detune: d.clone(),
                })
            })
            .collect()
    }

    pub fn examples(&self) -> Result<Vec<TrainingExample>> {
        self.versions()?
            .iter()
            .map(|v| TrainingExample::build(&self.id, v, &self.backing_cqt, &self.notes))
            .collect()
    }
}
