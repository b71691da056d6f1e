//! Training data: synthetic performances, per-note CQT detuning and corpus
//! layout on disk.

mod corpus;
mod detune;
mod synth;

pub use corpus::{build_corpus, CorpusConfig, CorpusEntry, CorpusManifest, SongData, Split};
pub use detune::{
    apply_detune, make_detuned_versions, sample_note_shifts, DetuneSpec, DetunedVersion,
    NoteExample, TrainingExample, MAX_DETUNE, VERSIONS,
};
pub use synth::{
    synth_performance, Chord, MelodyNote, SongParams, SongSpec, SynthPerformance, CHORD_ROOT_RANGE,
    MELODY_RANGE,
};
