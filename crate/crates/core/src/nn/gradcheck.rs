//! Central finite-difference validation of analytic gradients.

use serde::Serialize;

/// Default probe step.
pub const FD_STEP: f64 = 1e-3;

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub checked: usize,
    /// `(input index, element index)` of the largest error.
    pub worst: Option<(usize, usize)>,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error < self.tolerance
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FdOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Probe at most this many evenly spaced elements per input.
    pub max_per_input: Option<usize>,
    /// Use [`stable_derivative`] starting at `step` instead of a single
    /// central difference.
    pub extrapolate: bool,
}

impl FdOptions {
    pub fn new(tolerance: f64) -> Self {
        Self {
            step: FD_STEP,
            tolerance,
            max_per_input: None,
            extrapolate: false,
        }
    }
}

/// Compares `analytic[i][j]` with `(L(x + h e_ij) - L(x - h e_ij)) / 2h` for
/// every probed element of every input.
pub fn finite_difference_check(
    name: &str,
    inputs: &[Vec<f64>],
    analytic: &[Vec<f64>],
    mut loss: impl FnMut(&[Vec<f64>]) -> f64,
    opts: FdOptions,
) -> GradCheck {
    assert_eq!(inputs.len(), analytic.len(), "one gradient per input");
    let mut probe = inputs.to_vec();
    let mut report = GradCheck {
        name: name.to_string(),
        max_rel_error: 0.0,
        tolerance: opts.tolerance,
        checked: 0,
        worst: None,
    };
    for (i, grad) in analytic.iter().enumerate() {
        assert_eq!(grad.len(), inputs[i].len(), "gradient shape for input {i}");
        let n = inputs[i].len();
        let stride = match opts.max_per_input {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        for j in (0..n).step_by(stride) {
            let orig = probe[i][j];
            let mut shifted = |offset: f64| {
                probe[i][j] = orig + offset;
                let l = loss(&probe);
                probe[i][j] = orig;
                l
            };
            let numeric = if opts.extrapolate {
                stable_derivative(shifted, opts.step).0
            } else {
                (shifted(opts.step) - shifted(-opts.step)) / (2.0 * opts.step)
            };
            let err = relative_error(grad[j], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((i, j));
            }
        }
    }
    report
}

const STEP_SHRINK: f64 = 4.0;
const STEP_COUNT: usize = 10;
const AGREEMENT: f64 = 1e-4;
/// Loss roundoff assumed in units of `f64::EPSILON * |L|`.
const ROUNDOFF_ULPS: f64 = 4.0;

/// Derivative of `loss(offset)` at offset 0 from central differences
/// `D_k` at `h0 / 4^k` (ten steps).
///
/// On a smooth function the gaps `|D_{k+1} - D_k|` shrink about 16-fold per
/// step until they reach roundoff; a kink within reach of the step breaks
/// that pattern. The first `k` whose gap is within `1e-4` relative (or at
/// roundoff) and is followed by a gap at least 4 times smaller (or at
/// roundoff) is taken: at roundoff `D_k` itself is returned, otherwise the
/// Richardson combination of the next pair. Falls back to the closest
/// adjacent pair. Returns `(estimate, gap)`.
pub fn stable_derivative(mut loss: impl FnMut(f64) -> f64, h0: f64) -> (f64, f64) {
    let (mut d, mut noise) = (Vec::with_capacity(STEP_COUNT), Vec::with_capacity(STEP_COUNT));
    for k in 0..STEP_COUNT {
        let h = h0 / STEP_SHRINK.powi(k as i32);
        let (up, down) = (loss(h), loss(-h));
        d.push((up - down) / (2.0 * h));
        noise.push(ROUNDOFF_ULPS * f64::EPSILON * up.abs().max(down.abs()) / h);
    }
    let gap = |k: usize| (d[k + 1] - d[k]).abs();
    let at_noise = |k: usize| gap(k) <= noise[k + 1];
    let richardson = |k: usize| d[k + 1] + (d[k + 1] - d[k]) / (STEP_SHRINK * STEP_SHRINK - 1.0);
    for k in 0..STEP_COUNT - 2 {
        let agrees = at_noise(k) || gap(k) <= AGREEMENT * d[k + 1].abs();
        let converging = at_noise(k + 1) || gap(k + 1) <= gap(k) / STEP_SHRINK;
        if agrees && converging {
            return if at_noise(k) { (d[k], gap(k)) } else { (richardson(k + 1), gap(k + 1)) };
        }
    }
    (0..STEP_COUNT - 1)
        .map(|k| (d[k + 1], gap(k)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least two steps")
}

/// `sum_k y_k r_k`: turns a tensor-valued op into a scalar loss whose
/// upstream gradient is exactly `r`.
pub fn project(y: &[f64], r: &[f64]) -> f64 {
    y.iter().zip(r).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes() {
        let x = vec![vec![0.3, -1.2, 2.0]];
        let g = vec![x[0].iter().map(|v| 2.0 * v).collect()];
        let r = finite_difference_check("sq", &x, &g, |p| p[0].iter().map(|v| v * v).sum(), FdOptions::new(1e-9));
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let x = vec![vec![0.3, -1.2, 2.0]];
        let g = vec![x[0].iter().map(|v| 2.0 * v * 1.01).collect()];
        let r = finite_difference_check("sq", &x, &g, |p| p[0].iter().map(|v| v * v).sum(), FdOptions::new(1e-3));
        assert!(!r.passed());
        assert!((r.max_rel_error - 0.01 / 2.01).abs() < 1e-6);
    }

    #[test]
    fn stable_derivative_is_accurate_on_smooth_functions() {
        let (d, err) = stable_derivative(|h| (1.0f64 + h).sin(), 1e-3);
        assert!((d - 1.0f64.cos()).abs() < 1e-9, "{d}");
        assert!(err < 1e-8);
    }

    #[test]
    fn stable_derivative_sees_past_a_nearby_kink() {
        // |x - 1e-5| at x = 0 has slope -1; a plain step of 1e-3 gives ~ -0.01
        let f = |x: f64| (x - 1e-5).abs() + 0.5 * x * x;
        assert!(((f(1e-3) - f(-1e-3)) / 2e-3 + 1.0).abs() > 0.9);
        let (d, _) = stable_derivative(f, 1e-3);
        assert!((d + 1.0).abs() < 1e-9, "{d}");
    }

    #[test]
    fn subsampling() {
        let x = vec![vec![1.0; 100]];
        let g = vec![vec![1.0; 100]];
        let opts = FdOptions {
            max_per_input: Some(10),
            ..FdOptions::new(1e-6)
        };
        let r = finite_difference_check("sum", &x, &g, |p| p[0].iter().sum(), opts);
        assert_eq!(r.checked, 10);
        assert!(r.passed());
    }
}
