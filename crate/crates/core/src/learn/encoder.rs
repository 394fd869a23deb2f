//! Embedding encoders shared by every trainable stage.
//!
//! All inputs are token-id sequences; the callers own the vocabulary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, Mat};
use super::vocab::PAD;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// `|vocab| × hidden` embedding table.
    pub embeddings: Mat,
    /// Context window radius for token encodings.
    pub window: usize,
}

impl EncoderParams {
    pub fn new<R: Rng>(vocab_size: usize, hidden: usize, window: usize, rng: &mut R) -> Self {
        EncoderParams {
            embeddings: Mat::uniform(vocab_size, hidden, 0.1, rng),
            window,
        }
    }

    pub fn zeros(vocab_size: usize, hidden: usize, window: usize) -> Self {
        EncoderParams {
            embeddings: Mat::zeros(vocab_size, hidden),
            window,
        }
    }

    pub fn hidden(&self) -> usize {
        self.embeddings.cols
    }

    /// Width of one token column, `(2w + 1) · h`.
    pub fn column_dim(&self) -> usize {
        (2 * self.window + 1) * self.hidden()
    }

    /// Mean of the token embeddings.
    pub fn encode_sentence(&self, ids: &[usize]) -> Result<Vec<f64>> {
        if ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut out = vec![0.0; self.hidden()];
        let scale = 1.0 / ids.len() as f64;
        for &id in ids {
            axpy(scale, self.embeddings.row(id), &mut out);
        }
        Ok(out)
    }

    /// Accumulates the gradient of a mean-pooled encoding into `grad`.
    pub fn sentence_backward(&self, ids: &[usize], d_out: &[f64], grad: &mut EncoderParams) {
        let scale = 1.0 / ids.len() as f64;
        for &id in ids {
            axpy(scale, d_out, grad.embeddings.row_mut(id));
        }
    }

    #[inline]
    fn window_id(ids: &[usize], pos: isize) -> usize {
        if pos < 0 || pos as usize >= ids.len() {
            PAD
        } else {
            ids[pos as usize]
        }
    }

    /// Concatenated embeddings of the tokens `i-w ..= i+w`; padding outside
    /// the sequence.
    pub fn column(&self, ids: &[usize], i: usize) -> Vec<f64> {
        let h = self.hidden();
        let w = self.window as isize;
        let mut out = Vec::with_capacity(self.column_dim());
        for off in -w..=w {
            let id = Self::window_id(ids, i as isize + off);
            out.extend_from_slice(&self.embeddings.row(id)[..h]);
        }
        out
    }

    pub fn column_backward(&self, ids: &[usize], i: usize, d_col: &[f64], grad: &mut EncoderParams) {
        let h = self.hidden();
        let w = self.window as isize;
        for (block, off) in (-w..=w).enumerate() {
            let id = Self::window_id(ids, i as isize + off);
            axpy(1.0, &d_col[block * h..(block + 1) * h], grad.embeddings.row_mut(id));
        }
    }

    /// Token encodings for a sequence padded to `max_len` positions: one
    /// column of width `(2w+1)·h` per position. Tokens past `max_len` are cut.
    pub fn encode_tokens(&self, ids: &[usize], max_len: usize) -> Result<Vec<Vec<f64>>> {
        if ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = ids.len().min(max_len);
        let ids = &ids[..n];
        Ok((0..max_len.max(n)).map(|i| self.column(ids, i)).collect())
    }

    /// `[a; b; |a−b|; a⊙b]` over the mean encodings of both sides.
    pub fn encode_pair(&self, a: &[usize], b: &[usize]) -> Result<Vec<f64>> {
        let ea = self.encode_sentence(a)?;
        let eb = self.encode_sentence(b)?;
        Ok(pair_features(&ea, &eb))
    }

    /// Backpropagates `d_out` (length `4h`) through `encode_pair`.
    pub fn pair_backward(&self, a: &[usize], b: &[usize], d_out: &[f64], grad: &mut EncoderParams) -> Result<()> {
        let ea = self.encode_sentence(a)?;
        let eb = self.encode_sentence(b)?;
        let (da, db) = pair_features_backward(&ea, &eb, d_out);
        self.sentence_backward(a, &da, grad);
        self.sentence_backward(b, &db, grad);
        Ok(())
    }
}

pub fn pair_features(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * a.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.extend(a.iter().zip(b).map(|(x, y)| (x - y).abs()));
    out.extend(a.iter().zip(b).map(|(x, y)| x * y));
    out
}

pub fn pair_features_backward(a: &[f64], b: &[f64], d_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = a.len();
    let mut da = d_out[..h].to_vec();
    let mut db = d_out[h..2 * h].to_vec();
    for i in 0..h {
        let sign = (a[i] - b[i]).signum();
        let d_abs = d_out[2 * h + i] * if a[i] == b[i] { 0.0 } else { sign };
        let d_mul = d_out[3 * h + i];
        da[i] += d_abs + d_mul * b[i];
        db[i] += -d_abs + d_mul * a[i];
    }
    (da, db)
}
