//! Linear-chain CRF over an emission matrix (`labels × positions`) and a
//! label-to-label transition matrix. A path scores the sum of its emissions
//! and transitions; there are no start or stop transitions.
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::learn::{logsumexp, Mat};

fn check(emissions: &Mat, trans: &Mat) {
    assert!(emissions.cols >= 1, "CRF needs at least one position");
    assert_eq!(trans.rows, emissions.rows);
    assert_eq!(trans.cols, emissions.rows);
}

/// Forward log-messages; `alpha[t][j]` covers positions `0..=t` ending in `j`.
fn forward(emissions: &Mat, trans: &Mat) -> Vec<Vec<f64>> {
    let k = emissions.rows;
    let m = emissions.cols;
    let mut alpha = vec![vec![0.0; k]; m];
    for j in 0..k {
        alpha[0][j] = emissions.get(j, 0);
    }
    let mut scratch = vec![0.0; k];
    for t in 1..m {
        for j in 0..k {
            for i in 0..k {
                scratch[i] = alpha[t - 1][i] + trans.get(i, j);
            }
            alpha[t][j] = logsumexp(&scratch) + emissions.get(j, t);
        }
    }
    alpha
}

fn backward(emissions: &Mat, trans: &Mat) -> Vec<Vec<f64>> {
    let k = emissions.rows;
    let m = emissions.cols;
    let mut beta = vec![vec![0.0; k]; m];
    let mut scratch = vec![0.0; k];
    for t in (0..m - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                scratch[j] = trans.get(i, j) + emissions.get(j, t + 1) + beta[t + 1][j];
            }
            beta[t][i] = logsumexp(&scratch);
        }
    }
    beta
}

/// Log of the sum over all `k^m` label paths of `exp(score)`.
pub fn crf_log_partition(emissions: &Mat, trans: &Mat) -> f64 {
    check(emissions, trans);
    let alpha = forward(emissions, trans);
    logsumexp(&alpha[emissions.cols - 1])
}

pub fn path_score(emissions: &Mat, trans: &Mat, path: &[usize]) -> f64 {
    let mut score = 0.0;
    for (t, &y) in path.iter().enumerate() {
        score += emissions.get(y, t);
        if t > 0 {
            score += trans.get(path[t - 1], y);
        }
    }
    score
}

fn check_gold(emissions: &Mat, gold: &[usize]) -> Result<()> {
    if gold.len() != emissions.cols {
        return Err(Error::BadLabel(gold.len().min(emissions.cols)));
    }
    if let Some(pos) = gold.iter().position(|&y| y >= emissions.rows) {
        return Err(Error::BadLabel(pos));
    }
    Ok(())
}

/// Negative log-likelihood `logZ − score(gold)`.
pub fn crf_nll(emissions: &Mat, trans: &Mat, gold: &[usize]) -> Result<f64> {
    check_gold(emissions, gold)?;
    Ok((crf_log_partition(emissions, trans) - path_score(emissions, trans, gold)).max(0.0))
}

/// Gradients of [`crf_nll`] with respect to emissions and transitions.
pub struct CrfGrad {
    pub loss: f64,
    pub emissions: Mat,
    pub transitions: Mat,
}

pub fn crf_nll_grad(emissions: &Mat, trans: &Mat, gold: &[usize]) -> Result<CrfGrad> {
    check_gold(emissions, gold)?;
    check(emissions, trans);
    let k = emissions.rows;
    let m = emissions.cols;
    let alpha = forward(emissions, trans);
    let beta = backward(emissions, trans);
    let log_z = logsumexp(&alpha[m - 1]);

    let mut d_emis = Mat::zeros(k, m);
    let mut d_trans = Mat::zeros(k, k);
    for t in 0..m {
        for j in 0..k {
            let marginal = (alpha[t][j] + beta[t][j] - log_z).exp();
            d_emis.set(j, t, marginal);
        }
        if t > 0 {
            for i in 0..k {
                for j in 0..k {
                    let pair = (alpha[t - 1][i] + trans.get(i, j) + emissions.get(j, t) + beta[t][j] - log_z).exp();
                    d_trans.set(i, j, d_trans.get(i, j) + pair);
                }
            }
        }
    }
    for (t, &y) in gold.iter().enumerate() {
        d_emis.set(y, t, d_emis.get(y, t) - 1.0);
        if t > 0 {
            let prev = gold[t - 1];
            d_trans.set(prev, y, d_trans.get(prev, y) - 1.0);
        }
    }
    let loss = (log_z - path_score(emissions, trans, gold)).max(0.0);
    Ok(CrfGrad {
        loss,
        emissions: d_emis,
        transitions: d_trans,
    })
}

/// Highest-scoring label path; ties go to the lower label index.
pub fn viterbi(emissions: &Mat, trans: &Mat) -> Vec<usize> {
    check(emissions, trans);
    let k = emissions.rows;
    let m = emissions.cols;
    let mut delta: Vec<f64> = (0..k).map(|j| emissions.get(j, 0)).collect();
    let mut back = vec![vec![0usize; k]; m];
    for t in 1..m {
        let mut next = vec![f64::NEG_INFINITY; k];
        for j in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, &d) in delta.iter().enumerate() {
                let s = d + trans.get(i, j);
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            next[j] = best + emissions.get(j, t);
            back[t][j] = arg;
        }
        delta = next;
    }
    let mut last = 0;
    for j in 1..k {
        if delta[j] > delta[last] {
            last = j;
        }
    }
    let mut path = vec![0; m];
    path[m - 1] = last;
    for t in (1..m).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}
