//! Log-space forward–backward and Viterbi over a precomputed emission matrix.
//!
//! All routines take `log_init[d]`, `log_trans[d][d]` and `log_emit[K][d]` so they can be
//! checked against brute-force enumeration independently of any emission family.

use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Real};

#[derive(Debug, Clone)]
pub struct ForwardBackward<T> {
    pub log_likelihood: T,
    /// `P(s_n = j | obs)`, one row per observation.
    pub posteriors: Vec<Vec<T>>,
    /// Expected transition counts `Σ_n P(s_{n-1} = i, s_n = j | obs)`.
    pub expected_transitions: Vec<Vec<T>>,
    /// Forward variables `ln P(obs_1..n, s_n = j)`.
    pub log_alpha: Vec<Vec<T>>,
}

fn check_shapes<T>(log_init: &[T], log_trans: &[Vec<T>], log_emit: &[Vec<T>]) -> Result<usize> {
    let d = log_init.len();
    if d == 0 || log_trans.len() != d || log_trans.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("transition matrix shape mismatch".into()));
    }
    if log_emit.is_empty() {
        return Err(Error::InvalidInput("empty observation sequence".into()));
    }
    if log_emit.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("emission matrix shape mismatch".into()));
    }
    Ok(d)
}

/// Forward pass; returns `(log_alpha, log_likelihood)`.
pub fn forward<T: Real>(log_init: &[T], log_trans: &[Vec<T>], log_emit: &[Vec<T>]) -> Result<(Vec<Vec<T>>, T)> {
    let d = check_shapes(log_init, log_trans, log_emit)?;
    let k = log_emit.len();
    let mut alpha = vec![vec![T::neg_infinity(); d]; k];
    for j in 0..d {
        alpha[0][j] = log_init[j] + log_emit[0][j];
    }
    let mut scratch = vec![T::zero(); d];
    for n in 1..k {
        if alpha[n - 1].iter().all(|&a| a == T::neg_infinity()) {
            return Err(Error::ZeroLikelihood { index: n - 1 });
        }
        for j in 0..d {
            for i in 0..d {
                scratch[i] = alpha[n - 1][i] + log_trans[i][j];
            }
            alpha[n][j] = log_sum_exp(&scratch) + log_emit[n][j];
        }
    }
    let ll = log_sum_exp(&alpha[k - 1]);
    if ll == T::neg_infinity() || ll.is_nan() {
        return Err(Error::ZeroLikelihood { index: k - 1 });
    }
    Ok((alpha, ll))
}

pub fn forward_backward<T: Real>(
    log_init: &[T],
    log_trans: &[Vec<T>],
    log_emit: &[Vec<T>],
) -> Result<ForwardBackward<T>> {
    let (alpha, ll) = forward(log_init, log_trans, log_emit)?;
    let d = log_init.len();
    let k = log_emit.len();
    let mut beta = vec![vec![T::zero(); d]; k];
    let mut scratch = vec![T::zero(); d];
    for n in (0..k - 1).rev() {
        for i in 0..d {
            for j in 0..d {
                scratch[j] = log_trans[i][j] + log_emit[n + 1][j] + beta[n + 1][j];
            }
            beta[n][i] = log_sum_exp(&scratch);
        }
    }
    let posteriors: Vec<Vec<T>> = (0..k)
        .map(|n| {
            let row: Vec<T> = (0..d).map(|j| alpha[n][j] + beta[n][j]).collect();
            let norm = log_sum_exp(&row);
            row.into_iter().map(|v| (v - norm).exp()).collect()
        })
        .collect();
    let mut xi = vec![vec![T::zero(); d]; d];
    for n in 1..k {
        for i in 0..d {
            if alpha[n - 1][i] == T::neg_infinity() {
                continue;
            }
            for j in 0..d {
                let v = alpha[n - 1][i] + log_trans[i][j] + log_emit[n][j] + beta[n][j] - ll;
                xi[i][j] = xi[i][j] + v.exp();
            }
        }
    }
    Ok(ForwardBackward { log_likelihood: ll, posteriors, expected_transitions: xi, log_alpha: alpha })
}

/// Most probable state sequence and its joint log-probability. Ties go to the lower state index.
pub fn viterbi<T: Real>(log_init: &[T], log_trans: &[Vec<T>], log_emit: &[Vec<T>]) -> Result<(Vec<usize>, T)> {
    let d = check_shapes(log_init, log_trans, log_emit)?;
    let k = log_emit.len();
    let mut score: Vec<T> = (0..d).map(|j| log_init[j] + log_emit[0][j]).collect();
    let mut back = vec![vec![0usize; d]; k];
    for n in 1..k {
        if score.iter().all(|&s| s == T::neg_infinity()) {
            return Err(Error::ZeroLikelihood { index: n - 1 });
        }
        let mut next = vec![T::neg_infinity(); d];
        for j in 0..d {
            let mut best = T::neg_infinity();
            let mut arg = 0;
            for (i, &s) in score.iter().enumerate() {
                let v = s + log_trans[i][j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            back[n][j] = arg;
            next[j] = best + log_emit[n][j];
        }
        score = next;
    }
    let mut last = 0;
    let mut best = T::neg_infinity();
    for (j, &s) in score.iter().enumerate() {
        if s > best {
            best = s;
            last = j;
        }
    }
    if best == T::neg_infinity() {
        return Err(Error::ZeroLikelihood { index: k - 1 });
    }
    let mut path = vec![0usize; k];
    path[k - 1] = last;
    for n in (1..k).rev() {
        path[n - 1] = back[n][path[n]];
    }
    Ok((path, best))
}

/// One-step-ahead state distribution `β_i = Σ_j α_n(j) P_ji / Σ_j α_n(j)`.
pub fn predictive_state<T: Real>(log_alpha_last: &[T], log_trans: &[Vec<T>]) -> Vec<T> {
    let norm = log_sum_exp(log_alpha_last);
    let d = log_alpha_last.len();
    (0..d)
        .map(|i| {
            log_alpha_last
                .iter()
                .enumerate()
                .map(|(j, &a)| ((a - norm) + log_trans[j][i]).exp())
                .sum()
        })
        .collect()
}
