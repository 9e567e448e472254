use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::Real;

/// Softmax cross-entropy of `logits: (rows, M)` against integer targets.
///
/// Returns the summed loss and `dL/dlogits` scaled by `scale`.
pub fn softmax_cross_entropy<T: Real>(logits: ArrayView2<T>, targets: &[usize], scale: T) -> (f64, Array2<T>) {
    assert_eq!(logits.nrows(), targets.len());
    let mut grad = logits.to_owned();
    let mut total = 0.0;
    for (mut row, &t) in grad.axis_iter_mut(Axis(0)).zip(targets) {
        let max = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        let target_logit = row[t];
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.sum();
        total += (sum.ln() + max - target_logit).f64();
        row.mapv_inplace(|v| v / sum * scale);
        row[t] -= scale;
    }
    (total, grad)
}

/// Closed-form `KL(N(mu, exp(logvar)) || N(0, I))` summed over rows and
/// latent dimensions, with gradients scaled by `scale`.
pub fn gaussian_kl<T: Real>(mu: ArrayView2<T>, logvar: ArrayView2<T>, scale: T) -> (f64, Array2<T>, Array2<T>) {
    let half = T::of(0.5);
    let mut total = 0.0;
    let mut dmu = Array2::zeros(mu.raw_dim());
    let mut dlv = Array2::zeros(mu.raw_dim());
    Zip::from(&mut dmu)
        .and(&mut dlv)
        .and(&mu)
        .and(&logvar)
        .for_each(|dm, dl, &m, &lv| {
            let e = lv.exp();
            total += (half * (m * m + e - T::one() - lv)).f64();
            *dm = m * scale;
            *dl = half * (e - T::one()) * scale;
        });
    (total, dmu, dlv)
}

/// `0.5 * ||pred - target||²` summed, with `dL/dpred` scaled by `scale`.
pub fn half_sse<T: Real>(pred: ArrayView2<T>, target: ArrayView2<T>, scale: T) -> (f64, Array2<T>) {
    let diff = &pred - &target;
    let total = diff.iter().map(|d| 0.5 * d.f64() * d.f64()).sum();
    (total, diff * scale)
}
