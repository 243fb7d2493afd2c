//! Trainable networks: a two-layer relu frame encoder with phase and tool
//! heads, and a single-layer bidirectional LSTM with the same two heads.

pub mod bilstm;
pub mod encoder;

pub use bilstm::{
    bilstm_backward, bilstm_forward, BiLstmCache, BiLstmDims, BiLstmParams, LstmDirection, SequenceOutput,
};
pub use encoder::{encoder_backward, encoder_forward, EncoderCache, EncoderDims, EncoderOutput, EncoderParams};

use rand::Rng;

use crate::tensor::{Matrix, SeededRng};

/// A fixed, ordered collection of named f64 blobs.
///
/// Gradients and optimizer velocities use the same type as the parameters.
pub trait ParamSet: Clone {
    fn blobs(&self) -> Vec<(&'static str, &[f64])>;
    fn blobs_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, b) in z.blobs_mut() {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.blobs().iter().map(|(_, b)| b.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.blobs().iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    fn scale(&mut self, k: f64) {
        for (_, b) in self.blobs_mut() {
            b.iter_mut().for_each(|v| *v *= k);
        }
    }

    fn flatten(&self) -> Vec<f64> {
        self.blobs().into_iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }
}

pub(crate) fn glorot_uniform(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

#[inline]
pub(crate) fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}
