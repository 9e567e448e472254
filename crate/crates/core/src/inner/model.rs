use ndarray::{s, Array2, ArrayView2};
use rand::Rng;

use super::{InnerModelConfig, PropertyBinding};
use crate::error::{Error, Result};
use crate::latent::{reparameterize, reparameterize_backward, LatentGaussian};
use crate::nn::loss::{gaussian_kl, half_sse};
use crate::nn::{relu_backward, relu_inplace, Dense, Param, Parameterized, Real};

/// Fully connected encoder and decoder over `P + Q` dimensional inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerModel<T: Real> {
    pub config: InnerModelConfig,
    pub input_dim: usize,
    enc: Vec<Dense<T>>,
    enc_head: Dense<T>,
    dec: Vec<Dense<T>>,
    dec_head: Dense<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLossParts {
    /// Half squared error summed over features, averaged over the batch.
    pub recon: f64,
    pub kl: f64,
    /// Sum over bindings of the batch correlation; 0 when skipped.
    pub corr: f64,
    pub total: f64,
}

/// `(recon + kl_weight * kl) - alpha * corr`.
pub fn total_loss(recon: f64, kl: f64, corr: f64, alpha: f64, kl_weight: f64) -> f64 {
    (recon + kl_weight * kl) - alpha * corr
}

/// Batch correlation term: for every binding `(b, k, dir)`, the cosine between
/// the mean-centred column `z[:, k]` and the mean-centred column `y[:, b]`,
/// times `dir`, summed over bindings. Returns the value and its gradient with
/// respect to `z`. A binding whose centred column has zero norm contributes 0.
pub fn corr_loss<T: Real>(z: ArrayView2<T>, y: ArrayView2<T>, bindings: &[PropertyBinding]) -> (f64, Array2<T>) {
    assert_eq!(z.nrows(), y.nrows(), "corr_loss: batch sizes differ");
    let d = z.nrows();
    let mut grad = Array2::zeros(z.raw_dim());
    let mut total = 0.0;
    if d < 2 {
        return (total, grad);
    }
    let n = T::of(d as f64);
    for bind in bindings {
        let u = z.column(bind.component);
        let w = y.column(bind.property);
        let (mu, mw) = (u.sum() / n, w.sum() / n);
        let uc: Vec<T> = u.iter().map(|&v| v - mu).collect();
        let wc: Vec<T> = w.iter().map(|&v| v - mw).collect();
        let nu = uc.iter().map(|&v| v * v).sum::<T>().sqrt();
        let nw = wc.iter().map(|&v| v * v).sum::<T>().sqrt();
        if nu == T::zero() || nw == T::zero() {
            log::warn!(
                "constant batch column for binding (property {}, component {}); correlation term is 0",
                bind.property,
                bind.component
            );
            continue;
        }
        let dot: T = uc.iter().zip(&wc).map(|(&a, &b)| a * b).sum();
        let cos = dot / (nu * nw);
        let dir = T::of(bind.direction as f64);
        total += (dir * cos).f64();
        // Centred vectors already sum to zero, so the centring projection is
        // the identity on this gradient.
        for i in 0..d {
            grad[[i, bind.component]] += dir * (wc[i] / (nu * nw) - cos * uc[i] / (nu * nu));
        }
    }
    (total, grad)
}

pub struct InnerForwardCache<T: Real> {
    x: Array2<T>,
    enc_outs: Vec<Array2<T>>,
    latent: LatentGaussian<T>,
    noise: Array2<T>,
    z: Array2<T>,
    dec_outs: Vec<Array2<T>>,
    drecon: Array2<T>,
    dz_corr: Option<Array2<T>>,
    dmu_kl: Array2<T>,
    dlv_kl: Array2<T>,
}

fn mlp_forward<T: Real>(layers: &[Dense<T>], x: ArrayView2<T>) -> Vec<Array2<T>> {
    let mut outs: Vec<Array2<T>> = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        let mut h = l.forward(if i == 0 { x } else { outs[i - 1].view() });
        relu_inplace(&mut h);
        outs.push(h);
    }
    outs
}

/// Backpropagates through a ReLU stack; `dlast` is the gradient at its output.
fn mlp_backward<T: Real>(layers: &mut [Dense<T>], x: ArrayView2<T>, outs: &[Array2<T>], dlast: Array2<T>) -> Array2<T> {
    let mut g = dlast;
    for i in (0..layers.len()).rev() {
        relu_backward(&outs[i], &mut g);
        let input = if i == 0 { x } else { outs[i - 1].view() };
        g = layers[i].backward(input, g.view());
    }
    g
}

impl<T: Real> InnerModel<T> {
    pub fn new<R: Rng + ?Sized>(config: &InnerModelConfig, input_dim: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if config.latent_dim >= input_dim {
            return Err(Error::Config(format!(
                "inner latent_dim {} must be smaller than the input dimension {input_dim}",
                config.latent_dim
            )));
        }
        let stack = |widths: &[usize], mut width: usize, rng: &mut R| {
            let layers: Vec<Dense<T>> = widths
                .iter()
                .map(|&w| {
                    let l = Dense::new(width, w, rng);
                    width = w;
                    l
                })
                .collect();
            (layers, width)
        };
        let (enc, ew) = stack(&config.enc_widths, input_dim, rng);
        let enc_head = Dense::new(ew, 2 * config.latent_dim, rng);
        let (dec, dw) = stack(&config.dec_widths, config.latent_dim, rng);
        let dec_head = Dense::new(dw, input_dim, rng);
        Ok(Self {
            config: config.clone(),
            input_dim,
            enc,
            enc_head,
            dec,
            dec_head,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn check_cols(&self, x: ArrayView2<T>, cols: usize, what: &str) -> Result<()> {
        if x.ncols() != cols {
            return Err(Error::Shape {
                expected: format!("{what} with {cols} columns"),
                got: format!("{:?}", x.dim()),
            });
        }
        Ok(())
    }

    fn encode_cached(&self, x: ArrayView2<T>) -> (LatentGaussian<T>, Vec<Array2<T>>) {
        let outs = mlp_forward(&self.enc, x);
        let head = self.enc_head.forward(outs.last().map_or(x, |o| o.view()));
        (LatentGaussian::from_joint(head.view()), outs)
    }

    /// Posterior over `Z_in` for a `(d, P + Q)` batch.
    pub fn encode(&self, x: ArrayView2<T>) -> Result<LatentGaussian<T>> {
        self.check_cols(x, self.input_dim, "inner input")?;
        Ok(self.encode_cached(x).0)
    }

    fn decode_cached(&self, z: ArrayView2<T>) -> (Array2<T>, Vec<Array2<T>>) {
        let outs = mlp_forward(&self.dec, z);
        let y = self.dec_head.forward(outs.last().map_or(z, |o| o.view()));
        (y, outs)
    }

    /// Reconstruction `(d, P + Q)` of a `(d, R)` batch of latents.
    pub fn decode(&self, z: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_cols(z, self.latent_dim(), "inner latent")?;
        Ok(self.decode_cached(z).0)
    }

    /// Forward pass of the combined loss. `y` holds the properties of the
    /// batch. The correlation term is included when `with_corr` is set; with
    /// `alpha == 0` its value is reported but contributes no gradient.
    pub fn forward_loss(
        &self,
        x: ArrayView2<T>,
        y: ArrayView2<T>,
        noise: ArrayView2<T>,
        with_corr: bool,
    ) -> Result<(InnerLossParts, InnerForwardCache<T>)> {
        self.check_cols(x, self.input_dim, "inner input")?;
        if y.nrows() != x.nrows() {
            return Err(Error::Shape {
                expected: format!("{} property rows", x.nrows()),
                got: format!("{}", y.nrows()),
            });
        }
        let d = x.nrows();
        let c = &self.config;
        let (latent, enc_outs) = self.encode_cached(x);
        let z = reparameterize(&latent, noise)?;
        let (recon_x, dec_outs) = self.decode_cached(z.view());
        let inv_d = T::of(1.0 / d as f64);
        let (sse, drecon) = half_sse(recon_x.view(), x, inv_d);
        let (kl_sum, dmu_kl, dlv_kl) =
            gaussian_kl(latent.mu.view(), latent.logvar.view(), T::of(c.kl_weight / d as f64));
        let (corr, dz_corr) = if with_corr {
            let (v, g) = corr_loss(z.view(), y, &c.bindings);
            (v, (c.alpha > 0.0).then(|| g * T::of(-c.alpha)))
        } else {
            (0.0, None)
        };
        let recon = sse / d as f64;
        let kl = kl_sum / d as f64;
        let parts = InnerLossParts {
            recon,
            kl,
            corr,
            total: total_loss(recon, kl, corr, c.alpha, c.kl_weight),
        };
        Ok((
            parts,
            InnerForwardCache {
                x: x.to_owned(),
                enc_outs,
                latent,
                noise: noise.to_owned(),
                z,
                dec_outs,
                drecon,
                dz_corr,
                dmu_kl,
                dlv_kl,
            },
        ))
    }

    /// Accumulates gradients of the loss computed by [`forward_loss`].
    pub fn backward(&mut self, cache: &InnerForwardCache<T>) {
        let dec_top = cache.dec_outs.last().map_or(cache.z.view(), |o| o.view());
        let dh = self.dec_head.backward(dec_top, cache.drecon.view());
        let mut dz = if self.dec.is_empty() {
            dh
        } else {
            mlp_backward(&mut self.dec, cache.z.view(), &cache.dec_outs, dh)
        };
        if let Some(g) = &cache.dz_corr {
            dz += g;
        }
        let (mut dmu, mut dlv) = reparameterize_backward(&cache.latent, cache.noise.view(), dz.view());
        dmu += &cache.dmu_kl;
        dlv += &cache.dlv_kl;
        let r = self.latent_dim();
        let mut dhead = Array2::zeros((dmu.nrows(), 2 * r));
        dhead.slice_mut(s![.., ..r]).assign(&dmu);
        dhead.slice_mut(s![.., r..]).assign(&dlv);
        let enc_top = cache.enc_outs.last().map_or(cache.x.view(), |o| o.view());
        if self.enc.is_empty() {
            self.enc_head.accumulate(enc_top, dhead.view());
        } else {
            let g = self.enc_head.backward(enc_top, dhead.view());
            mlp_backward(&mut self.enc, cache.x.view(), &cache.enc_outs, g);
        }
    }

    pub fn cast<U: Real>(&self) -> InnerModel<U> {
        let cd = |l: &Dense<T>| Dense {
            w: l.w.cast(),
            b: l.b.cast(),
        };
        InnerModel {
            config: self.config.clone(),
            input_dim: self.input_dim,
            enc: self.enc.iter().map(cd).collect(),
            enc_head: cd(&self.enc_head),
            dec: self.dec.iter().map(cd).collect(),
            dec_head: cd(&self.dec_head),
        }
    }
}

impl<T: Real> Parameterized<T> for InnerModel<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut v = Vec::new();
        for (i, l) in self.enc.iter().enumerate() {
            v.push((format!("enc.fc{i}.w"), &l.w));
            v.push((format!("enc.fc{i}.b"), &l.b));
        }
        v.push(("enc.head.w".into(), &self.enc_head.w));
        v.push(("enc.head.b".into(), &self.enc_head.b));
        for (i, l) in self.dec.iter().enumerate() {
            v.push((format!("dec.fc{i}.w"), &l.w));
            v.push((format!("dec.fc{i}.b"), &l.b));
        }
        v.push(("dec.head.w".into(), &self.dec_head.w));
        v.push(("dec.head.b".into(), &self.dec_head.b));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut v = Vec::new();
        for (i, l) in self.enc.iter_mut().enumerate() {
            v.push((format!("enc.fc{i}.w"), &mut l.w));
            v.push((format!("enc.fc{i}.b"), &mut l.b));
        }
        v.push(("enc.head.w".into(), &mut self.enc_head.w));
        v.push(("enc.head.b".into(), &mut self.enc_head.b));
        for (i, l) in self.dec.iter_mut().enumerate() {
            v.push((format!("dec.fc{i}.w"), &mut l.w));
            v.push((format!("dec.fc{i}.b"), &mut l.b));
        }
        v.push(("dec.head.w".into(), &mut self.dec_head.w));
        v.push(("dec.head.b".into(), &mut self.dec_head.b));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn bind() -> Vec<PropertyBinding> {
        vec![PropertyBinding::new(0, 0)]
    }

    #[test]
    fn collinear_columns_give_one() {
        let z = array![[1.0], [2.0], [3.0]];
        let y = array![[2.0], [4.0], [6.0]];
        let (c, _) = corr_loss(z.view(), y.view(), &bind());
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_and_constant_columns_give_zero() {
        let z = array![[1.0], [-1.0], [1.0], [-1.0]];
        let y = array![[1.0], [1.0], [-1.0], [-1.0]];
        assert_eq!(corr_loss(z.view(), y.view(), &bind()).0, 0.0);
        let y = array![[3.0], [3.0], [3.0], [3.0]];
        let (c, g) = corr_loss(z.view(), y.view(), &bind());
        assert_eq!(c, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn direction_flips_sign() {
        let z = array![[1.0], [2.0], [4.0]];
        let y = array![[1.0], [3.0], [2.0]];
        let mut b = bind();
        let (c, _) = corr_loss(z.view(), y.view(), &b);
        b[0].direction = -1;
        assert_eq!(corr_loss(z.view(), y.view(), &b).0, -c);
    }

    #[test]
    fn total_loss_identities() {
        assert_eq!(total_loss(3.0, 2.0, 0.7, 0.0, 0.5), 3.0 + 0.5 * 2.0);
        assert_eq!(total_loss(3.0, 2.0, 1.0, 10.0, 1.0), 5.0 - 10.0);
    }

    #[test]
    fn shapes() {
        let cfg = InnerModelConfig {
            latent_dim: 3,
            enc_widths: vec![5],
            dec_widths: vec![4, 4],
            ..Default::default()
        };
        let m = InnerModel::<f32>::new(&cfg, 6, &mut crate::rng::substream(0, "t")).unwrap();
        let x = Array2::ones((2, 6));
        let l = m.encode(x.view()).unwrap();
        assert_eq!(l.mu.dim(), (2, 3));
        let y = m.decode(l.mu.view()).unwrap();
        assert_eq!(y.dim(), (2, 6));
        assert!(y.iter().all(|v| v.is_finite()));
        assert!(m.encode(Array2::ones((2, 5)).view()).is_err());
        assert!(m.decode(Array2::ones((2, 4)).view()).is_err());
        assert!(InnerModel::<f32>::new(&cfg, 3, &mut crate::rng::substream(0, "t")).is_err());
    }
}
