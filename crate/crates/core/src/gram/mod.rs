//! Gram-matrix texture features and the Gram-Net classifier.

mod block;
mod net;

pub use block::{GramBlock, GramBlockConfig};
pub use net::{GramNet, GramNetConfig, ModelKind, NetError};

use crate::nn::{matmul, Scalar};

/// Spatial positions of a `channels x K` map sorted by their channel vectors
/// (lexicographic, total order). Summing in this order makes position-free
/// reductions bit-identical under any spatial permutation of the input.
pub fn canonical_positions<T: Scalar>(f: &[T], channels: usize) -> Vec<T> {
    let k = f.len() / channels;
    let mut rows: Vec<T> = vec![T::zero(); k * channels];
    for c in 0..channels {
        for p in 0..k {
            rows[p * channels + c] = f[c * k + p];
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_unstable_by(|&a, &b| {
        let (ra, rb) = (&rows[a * channels..(a + 1) * channels], &rows[b * channels..(b + 1) * channels]);
        ra.iter()
            .zip(rb)
            .map(|(x, y)| x.f64().total_cmp(&y.f64()))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut sorted = Vec::with_capacity(k * channels);
    for p in order {
        sorted.extend_from_slice(&rows[p * channels..(p + 1) * channels]);
    }
    sorted
}

/// `G_ij = sum_k F_ik F_jk` over the vectorized spatial positions of one
/// sample (`f` is `channels x K`, row-major). Divides by `K` when `normalize`.
pub fn gram_matrix<T: Scalar>(f: &[T], channels: usize, normalize: bool) -> Vec<T> {
    assert!(channels > 0 && f.len().is_multiple_of(channels) && !f.is_empty(), "gram input shape");
    let k = f.len() / channels;
    let rows = canonical_positions(f, channels);
    let mut g = vec![T::zero(); channels * channels];
    // rows is K x C, so G = rows^T rows
    matmul(channels, k, channels, &rows, true, &rows, false, &mut g, false);
    if normalize {
        let s = T::of(1.0 / k as f64);
        g.iter_mut().for_each(|v| *v = *v * s);
    }
    for i in 0..channels {
        for j in 0..i {
            g[i * channels + j] = g[j * channels + i];
        }
    }
    g
}

/// Gradient of [`gram_matrix`] w.r.t. `f`: `(dG + dG^T) F`, scaled by `1/K` when normalized.
pub fn gram_matrix_backward<T: Scalar>(f: &[T], channels: usize, normalize: bool, dg: &[T]) -> Vec<T> {
    let k = f.len() / channels;
    let s = if normalize { 1.0 / k as f64 } else { 1.0 };
    let sym: Vec<T> = (0..channels * channels)
        .map(|idx| {
            let (i, j) = (idx / channels, idx % channels);
            T::of((dg[i * channels + j].f64() + dg[j * channels + i].f64()) * s)
        })
        .collect();
    let mut df = vec![T::zero(); f.len()];
    matmul(channels, channels, k, &sym, false, f, false, &mut df, false);
    df
}

/// Sample covariance across spatial positions: channels are mean-centred
/// and the sum is divided by `K - 1`. `None` when `K < 2`.
pub fn covariance_matrix<T: Scalar>(f: &[T], channels: usize) -> Option<Vec<f64>> {
    let k = f.len() / channels;
    if k < 2 {
        return None;
    }
    let centred: Vec<f64> = (0..channels)
        .flat_map(|c| {
            let row = &f[c * k..(c + 1) * k];
            let mean = row.iter().map(|v| v.f64()).sum::<f64>() / k as f64;
            row.iter().map(move |v| v.f64() - mean)
        })
        .collect();
    let mut cov = vec![0.0; channels * channels];
    for i in 0..channels {
        for j in i..channels {
            let s: f64 = (0..k).map(|p| centred[i * k + p] * centred[j * k + p]).sum();
            cov[i * channels + j] = s / (k - 1) as f64;
            cov[j * channels + i] = cov[i * channels + j];
        }
    }
    Some(cov)
}
