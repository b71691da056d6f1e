use crate::error::Result;
use crate::features::ModelInput;
use crate::nn::AutotunerNet;

/// Note-by-note shift predictor that may carry state across the notes of
/// one performance.
pub trait NotePredictor {
    /// Called before the first note of each performance.
    fn reset(&mut self);
    /// Predicted corrective shift in semitones, or `None` when the note is too
    /// short to evaluate.
    fn predict(&mut self, input: &ModelInput) -> Result<Option<f64>>;
}

/// Runs the network with the GRU state carried from note to note. Each
/// performance starts from a zero state.
pub struct NetPredictor<'a> {
    net: &'a AutotunerNet<f32>,
    hidden: Vec<f32>,
}

impl<'a> NetPredictor<'a> {
    pub fn new(net: &'a AutotunerNet<f32>) -> Self {
        Self {
            net,
            hidden: vec![0.0; net.arch.hidden],
        }
    }
}

impl NotePredictor for NetPredictor<'_> {
    fn reset(&mut self) {
        self.hidden.iter_mut().for_each(|h| *h = 0.0);
    }

    fn predict(&mut self, input: &ModelInput) -> Result<Option<f64>> {
        if input.frames < self.net.arch.min_frames {
            return Ok(None);
        }
        let (y, h) = self.net.predict(input, &self.hidden)?;
        self.hidden = h;
        Ok(Some(y as f64))
    }
}

/// Always predicts no shift.
pub struct ZeroPredictor;

impl NotePredictor for ZeroPredictor {
    fn reset(&mut self) {}

    fn predict(&mut self, _input: &ModelInput) -> Result<Option<f64>> {
        Ok(Some(0.0))
    }
}
