use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::nn::loss::gaussian_kl;
use crate::nn::Real;

/// Batched diagonal Gaussian posterior, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian<T: Real> {
    pub mu: Array2<T>,
    pub logvar: Array2<T>,
}

impl<T: Real> LatentGaussian<T> {
    pub fn new(mu: Array2<T>, logvar: Array2<T>) -> Result<Self> {
        if mu.dim() != logvar.dim() {
            return Err(Error::Shape {
                expected: format!("logvar {:?}", mu.dim()),
                got: format!("{:?}", logvar.dim()),
            });
        }
        Ok(Self { mu, logvar })
    }

    /// Splits encoder output `(d, 2D)` into `mu ‖ logvar`.
    pub fn from_joint(out: ArrayView2<T>) -> Self {
        let dim = out.ncols() / 2;
        Self {
            mu: out.slice(ndarray::s![.., ..dim]).to_owned(),
            logvar: out.slice(ndarray::s![.., dim..]).to_owned(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.ncols()
    }

    pub fn batch_size(&self) -> usize {
        self.mu.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().chain(self.logvar.iter()).all(|v| v.is_finite())
    }

    /// Closed-form KL to the standard normal, averaged over the batch.
    pub fn kl(&self) -> f64 {
        let (total, _, _) = gaussian_kl(self.mu.view(), self.logvar.view(), T::zero());
        total / self.batch_size().max(1) as f64
    }
}

/// `z = mu + exp(logvar / 2) ⊙ noise`.
pub fn reparameterize<T: Real>(latent: &LatentGaussian<T>, noise: ArrayView2<T>) -> Result<Array2<T>> {
    if noise.dim() != latent.mu.dim() {
        return Err(Error::Shape {
            expected: format!("noise {:?}", latent.mu.dim()),
            got: format!("{:?}", noise.dim()),
        });
    }
    let half = T::of(0.5);
    let mut z = latent.mu.clone();
    Zip::from(&mut z)
        .and(&latent.logvar)
        .and(noise)
        .for_each(|z, &lv, &e| *z += (half * lv).exp() * e);
    Ok(z)
}

/// Gradient of `z` w.r.t. `(mu, logvar)` applied to `dz`.
pub fn reparameterize_backward<T: Real>(
    latent: &LatentGaussian<T>,
    noise: ArrayView2<T>,
    dz: ArrayView2<T>,
) -> (Array2<T>, Array2<T>) {
    let half = T::of(0.5);
    let mut dlv = Array2::zeros(dz.raw_dim());
    Zip::from(&mut dlv)
        .and(&latent.logvar)
        .and(noise)
        .and(dz)
        .for_each(|d, &lv, &e, &g| *d = g * e * half * (half * lv).exp());
    (dz.to_owned(), dlv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_noise_gives_mean() {
        let l = LatentGaussian::new(array![[1.0, -2.0]], array![[0.3, 1.0]]).unwrap();
        let z = reparameterize(&l, Array2::zeros((1, 2)).view()).unwrap();
        assert_eq!(z, l.mu);
    }

    #[test]
    fn unit_variance_adds_noise() {
        let l = LatentGaussian::new(array![[1.0, -2.0]], Array2::zeros((1, 2))).unwrap();
        let z = reparameterize(&l, array![[0.5, 0.25]].view()).unwrap();
        assert_eq!(z, array![[1.5, -1.75]]);
    }

    #[test]
    fn kl_spot_values() {
        let l = LatentGaussian::<f64>::new(Array2::zeros((2, 4)), Array2::zeros((2, 4))).unwrap();
        assert_eq!(l.kl(), 0.0);
        let mut mu = Array2::zeros((1, 4));
        mu[[0, 0]] = 1.0;
        let l = LatentGaussian::<f64>::new(mu, Array2::zeros((1, 4))).unwrap();
        assert_eq!(l.kl(), 0.5);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(LatentGaussian::<f32>::new(Array2::zeros((1, 2)), Array2::zeros((1, 3))).is_err());
    }
}
