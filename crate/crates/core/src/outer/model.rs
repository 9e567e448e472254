use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::OuterModelConfig;
use crate::chem::onehot::{argmax, sample_softmax};
use crate::chem::{DecodeMode, PAD_ID};
use crate::error::{Error, Result};
use crate::latent::{reparameterize, reparameterize_backward, LatentGaussian};
use crate::nn::conv::ConvCache;
use crate::nn::gru::GruCache;
use crate::nn::loss::{gaussian_kl, softmax_cross_entropy};
use crate::nn::{relu_backward, relu_inplace, Conv1d, Dense, Gru, Param, Parameterized, Real};

/// Convolutional encoder plus GRU decoder over token sequences.
///
/// The decoder's first GRU layer receives the previous token and a projection
/// of `z` at every step; every layer's initial state is `tanh` of an affine
/// map of `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterModel<T: Real> {
    pub config: OuterModelConfig,
    pub vocab_size: usize,
    convs: Vec<Conv1d<T>>,
    enc_fc: Vec<Dense<T>>,
    enc_head: Dense<T>,
    dec_init: Dense<T>,
    dec_tok: Param<T>,
    dec_z: Dense<T>,
    dec_in: Vec<Dense<T>>,
    grus: Vec<Gru<T>>,
    head: Dense<T>,
}

/// Loss components for one batch; `recon` is summed over positions and
/// averaged over the batch, `kl` is averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

pub struct EncoderCache<T: Real> {
    conv_caches: Vec<ConvCache<T>>,
    conv_outs: Vec<Array3<T>>,
    flat: Array2<T>,
    fc_outs: Vec<Array2<T>>,
}

pub struct DecoderCache<T: Real> {
    z: Array2<T>,
    init: Array2<T>,
    prev: Array2<usize>,
    hs: Vec<Array3<T>>,
    gru_caches: Vec<GruCache<T>>,
}

pub struct ForwardCache<T: Real> {
    enc: EncoderCache<T>,
    latent: LatentGaussian<T>,
    noise: Array2<T>,
    dec: DecoderCache<T>,
    dlogits: Array2<T>,
    dmu_kl: Array2<T>,
    dlv_kl: Array2<T>,
}

fn onehot_channels_last<T: Real>(ids: ArrayView2<usize>, m: usize) -> Array3<T> {
    let (d, n) = ids.dim();
    let mut x = Array3::zeros((d, n, m));
    for ((b, t), &id) in ids.indexed_iter() {
        x[[b, t, id]] = T::one();
    }
    x
}

fn flatten3<T: Real>(a: &Array3<T>) -> Array2<T> {
    let (x, y, z) = a.dim();
    a.as_standard_layout()
        .into_owned()
        .into_shape_with_order((x * y, z))
        .expect("flatten")
}

impl<T: Real> OuterModel<T> {
    pub fn new<R: Rng + ?Sized>(config: &OuterModelConfig, vocab_size: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut convs = Vec::new();
        let mut channels = vocab_size;
        let mut len = c.max_len;
        for (&out, &k) in c.conv_channels.iter().zip(&c.conv_kernels) {
            convs.push(Conv1d::new(channels, out, k, rng));
            channels = out;
            len = len + 1 - k;
        }
        let mut width = channels * len;
        let mut enc_fc = Vec::new();
        for &w in &c.fc_widths {
            enc_fc.push(Dense::new(width, w, rng));
            width = w;
        }
        let enc_head = Dense::new(width, 2 * c.latent_dim, rng);
        let h = c.gru_hidden;
        let gate_bound = 1.0 / ((vocab_size + c.latent_dim) as f64).sqrt();
        Ok(Self {
            config: config.clone(),
            vocab_size,
            convs,
            enc_fc,
            enc_head,
            dec_init: Dense::new(c.latent_dim, c.gru_layers * h, rng),
            dec_tok: Param::uniform(vocab_size, 3 * h, gate_bound, rng),
            dec_z: Dense::new(c.latent_dim, 3 * h, rng),
            dec_in: (1..c.gru_layers).map(|_| Dense::new(h, 3 * h, rng)).collect(),
            grus: (0..c.gru_layers).map(|_| Gru::new(h, rng)).collect(),
            head: Dense::new(h, vocab_size, rng),
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn check_ids(&self, ids: ArrayView2<usize>) -> Result<()> {
        if ids.ncols() != self.max_len() {
            return Err(Error::Shape {
                expected: format!("sequence length {}", self.max_len()),
                got: ids.ncols().to_string(),
            });
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab_size) {
            return Err(Error::Shape {
                expected: format!("token id < {}", self.vocab_size),
                got: bad.to_string(),
            });
        }
        Ok(())
    }

    fn check_z(&self, z: ArrayView2<T>) -> Result<()> {
        if z.ncols() != self.latent_dim() {
            return Err(Error::Shape {
                expected: format!("latent dim {}", self.latent_dim()),
                got: z.ncols().to_string(),
            });
        }
        Ok(())
    }

    fn encode_cached(&self, ids: ArrayView2<usize>) -> (LatentGaussian<T>, EncoderCache<T>) {
        let mut x = onehot_channels_last::<T>(ids, self.vocab_size);
        let mut conv_caches = Vec::new();
        let mut conv_outs = Vec::new();
        for conv in &self.convs {
            let (mut y, cache) = conv.forward(x.view());
            y.mapv_inplace(|v| v.max(T::zero()));
            conv_caches.push(cache);
            conv_outs.push(y.clone());
            x = y;
        }
        let d = x.dim().0;
        let flat = x
            .into_shape_with_order((d, conv_outs.last().map_or(0, |o| o.dim().1 * o.dim().2)))
            .expect("flatten conv output");
        let mut h = flat.clone();
        let mut fc_outs = Vec::new();
        for fc in &self.enc_fc {
            let mut y = fc.forward(h.view());
            relu_inplace(&mut y);
            fc_outs.push(y.clone());
            h = y;
        }
        let out = self.enc_head.forward(h.view());
        let latent = LatentGaussian::from_joint(out.view());
        (
            latent,
            EncoderCache {
                conv_caches,
                conv_outs,
                flat,
                fc_outs,
            },
        )
    }

    /// Posterior `(mu, logvar)` for a `(d, N)` batch of token ids.
    pub fn encode(&self, ids: ArrayView2<usize>) -> Result<LatentGaussian<T>> {
        self.check_ids(ids)?;
        Ok(self.encode_cached(ids).0)
    }

    fn encoder_backward(&mut self, cache: &EncoderCache<T>, dmu: ArrayView2<T>, dlv: ArrayView2<T>) {
        let p = self.latent_dim();
        let d = dmu.nrows();
        let mut dout = Array2::zeros((d, 2 * p));
        dout.slice_mut(s![.., ..p]).assign(&dmu);
        dout.slice_mut(s![.., p..]).assign(&dlv);
        let head_in = cache.fc_outs.last().unwrap_or(&cache.flat);
        let mut dh = self.enc_head.backward(head_in.view(), dout.view());
        for i in (0..self.enc_fc.len()).rev() {
            relu_backward(&cache.fc_outs[i], &mut dh);
            let input = if i == 0 { &cache.flat } else { &cache.fc_outs[i - 1] };
            dh = self.enc_fc[i].backward(input.view(), dh.view());
        }
        let last = cache.conv_outs.last().expect("at least one conv");
        let mut dx = dh.into_shape_with_order(last.raw_dim()).expect("unflatten");
        for i in (0..self.convs.len()).rev() {
            ndarray::Zip::from(&mut dx).and(&cache.conv_outs[i]).for_each(|g, &o| {
                if o <= T::zero() {
                    *g = T::zero();
                }
            });
            dx = self.convs[i].backward(&cache.conv_caches[i], dx.view());
        }
    }

    fn initial_states(&self, z: ArrayView2<T>) -> Array2<T> {
        let mut init = self.dec_init.forward(z);
        init.mapv_inplace(|v| v.tanh());
        init
    }

    fn layer_slice<'a>(&self, init: &'a Array2<T>, layer: usize) -> ArrayView2<'a, T> {
        let h = self.config.gru_hidden;
        init.slice(s![.., layer * h..(layer + 1) * h])
    }

    /// Teacher-forced decoding. `prev[b, t]` is the token fed at step `t`.
    /// Returns time-major logits `(N * d, M)`.
    fn decode_teacher(&self, z: ArrayView2<T>, prev: Array2<usize>) -> (Array2<T>, DecoderCache<T>) {
        let (d, n) = prev.dim();
        let h = self.config.gru_hidden;
        let init = self.initial_states(z);
        let zx = self.dec_z.forward(z);
        let mut gx = Array3::zeros((n, d, 3 * h));
        for t in 0..n {
            for b in 0..d {
                let mut row = gx.slice_mut(s![t, b, ..]);
                row.assign(&zx.row(b));
                row += &self.dec_tok.value.row(prev[[b, t]]);
            }
        }
        let mut hs = Vec::new();
        let mut gru_caches = Vec::new();
        for (l, gru) in self.grus.iter().enumerate() {
            if l > 0 {
                let below = flatten3(&hs[l - 1]);
                gx = self.dec_in[l - 1]
                    .forward(below.view())
                    .into_shape_with_order((n, d, 3 * h))
                    .expect("gate reshape");
            }
            let (out, cache) = gru.forward(gx.view(), self.layer_slice(&init, l));
            hs.push(out);
            gru_caches.push(cache);
        }
        let top = flatten3(hs.last().expect("at least one layer"));
        let logits = self.head.forward(top.view());
        (
            logits,
            DecoderCache {
                z: z.to_owned(),
                init,
                prev,
                hs,
                gru_caches,
            },
        )
    }

    /// Backpropagates time-major `dlogits`; returns `dL/dz`.
    fn decoder_backward(&mut self, cache: &DecoderCache<T>, dlogits: ArrayView2<T>) -> Array2<T> {
        let (d, n) = cache.prev.dim();
        let h = self.config.gru_hidden;
        let layers = self.grus.len();
        let top = flatten3(&cache.hs[layers - 1]);
        let mut dhs = self
            .head
            .backward(top.view(), dlogits)
            .into_shape_with_order((n, d, h))
            .expect("hidden grad reshape");
        let mut dinit = Array2::zeros(cache.init.raw_dim());
        let mut dz = Array2::zeros(cache.z.raw_dim());
        for l in (0..layers).rev() {
            let (dgx, dh0) = self.grus[l].backward(&cache.gru_caches[l], cache.hs[l].view(), dhs.view());
            dinit.slice_mut(s![.., l * h..(l + 1) * h]).assign(&dh0);
            if l > 0 {
                let below = flatten3(&cache.hs[l - 1]);
                let dgx_flat = dgx.into_shape_with_order((n * d, 3 * h)).expect("gate grad reshape");
                dhs = self.dec_in[l - 1]
                    .backward(below.view(), dgx_flat.view())
                    .into_shape_with_order((n, d, h))
                    .expect("hidden grad reshape");
            } else {
                let dzx = dgx.sum_axis(Axis(0));
                for t in 0..n {
                    for b in 0..d {
                        let mut g = self.dec_tok.grad.row_mut(cache.prev[[b, t]]);
                        g += &dgx.slice(s![t, b, ..]);
                    }
                }
                dz += &self.dec_z.backward(cache.z.view(), dzx.view());
            }
        }
        ndarray::Zip::from(&mut dinit)
            .and(&cache.init)
            .for_each(|g, &a| *g *= T::one() - a * a);
        dz += &self.dec_init.backward(cache.z.view(), dinit.view());
        dz
    }

    /// Teacher-forcing inputs: PAD as start symbol, then the target shifted by
    /// one. Positions flagged in `drop` are replaced by PAD (word dropout).
    pub fn teacher_inputs(ids: ArrayView2<usize>, drop: Option<&Array2<bool>>) -> Array2<usize> {
        let (d, n) = ids.dim();
        let mut prev = Array2::from_elem((d, n), PAD_ID);
        for b in 0..d {
            for t in 1..n {
                if !drop.is_some_and(|m| m[[b, t]]) {
                    prev[[b, t]] = ids[[b, t - 1]];
                }
            }
        }
        prev
    }

    /// Teacher-forced logits `(d, M, N)` for a given `z`.
    pub fn decode_teacher_forced(&self, z: ArrayView2<T>, ids: ArrayView2<usize>) -> Result<Array3<T>> {
        self.check_z(z)?;
        self.check_ids(ids)?;
        let (d, n) = ids.dim();
        let (logits, _) = self.decode_teacher(z, Self::teacher_inputs(ids, None));
        Ok(time_major_to_dmn(logits, d, n))
    }

    /// Full forward pass and loss. `noise` drives the reparameterization
    /// (all zeros means `z = mu`).
    pub fn forward_loss(
        &self,
        ids: ArrayView2<usize>,
        noise: ArrayView2<T>,
        kl_weight: f64,
        drop: Option<&Array2<bool>>,
    ) -> Result<(LossParts, ForwardCache<T>)> {
        self.check_ids(ids)?;
        let (d, n) = ids.dim();
        let (latent, enc) = self.encode_cached(ids);
        let z = reparameterize(&latent, noise)?;
        let (logits, dec) = self.decode_teacher(z.view(), Self::teacher_inputs(ids, drop));
        let mut targets = Vec::with_capacity(n * d);
        for t in 0..n {
            for b in 0..d {
                targets.push(ids[[b, t]]);
            }
        }
        let inv_d = T::of(1.0 / d as f64);
        let (ce, dlogits) = softmax_cross_entropy(logits.view(), &targets, inv_d);
        let (kl_sum, dmu_kl, dlv_kl) = gaussian_kl(latent.mu.view(), latent.logvar.view(), T::of(kl_weight / d as f64));
        let recon = ce / d as f64;
        let kl = kl_sum / d as f64;
        let parts = LossParts {
            recon,
            kl,
            total: recon + kl_weight * kl,
        };
        Ok((
            parts,
            ForwardCache {
                enc,
                latent,
                noise: noise.to_owned(),
                dec,
                dlogits,
                dmu_kl,
                dlv_kl,
            },
        ))
    }

    /// Accumulates gradients of the loss computed by [`forward_loss`].
    pub fn backward(&mut self, cache: &ForwardCache<T>) {
        let dz = self.decoder_backward(&cache.dec, cache.dlogits.view());
        let (mut dmu, mut dlv) = reparameterize_backward(&cache.latent, cache.noise.view(), dz.view());
        dmu += &cache.dmu_kl;
        dlv += &cache.dlv_kl;
        self.encoder_backward(&cache.enc, dmu.view(), dlv.view());
    }

    /// Free-running decoding: each step feeds back the chosen token.
    /// Returns logits `(d, M, N)` and chosen ids `(d, N)`. Sampling mode
    /// needs one rng per row.
    pub fn decode_free(
        &self,
        z: ArrayView2<T>,
        mode: DecodeMode,
        mut rngs: Option<&mut [ChaCha8Rng]>,
    ) -> Result<(Array3<T>, Array2<usize>)> {
        self.check_z(z)?;
        mode.validate()?;
        let d = z.nrows();
        if let DecodeMode::Sample { .. } = mode {
            if rngs.as_ref().map(|r| r.len()) != Some(d) {
                return Err(Error::Config("sampling needs one rng per decoded row".into()));
            }
        }
        let n = self.max_len();
        let m = self.vocab_size;
        let init = self.initial_states(z);
        let zx = self.dec_z.forward(z);
        let mut states: Vec<Array2<T>> = (0..self.grus.len())
            .map(|l| self.layer_slice(&init, l).to_owned())
            .collect();
        let mut prev = vec![PAD_ID; d];
        let mut logits = Array3::zeros((d, m, n));
        let mut ids = Array2::from_elem((d, n), PAD_ID);
        let mut row_buf = vec![0f32; m];
        for t in 0..n {
            let mut gx = zx.clone();
            for (mut row, &p) in gx.rows_mut().into_iter().zip(&prev) {
                row += &self.dec_tok.value.row(p);
            }
            for l in 0..self.grus.len() {
                if l > 0 {
                    gx = self.dec_in[l - 1].forward(states[l - 1].view());
                }
                states[l] = self.grus[l].step(gx.view(), states[l].view());
            }
            let out = self.head.forward(states.last().expect("layer").view());
            for b in 0..d {
                for (k, v) in out.row(b).iter().enumerate() {
                    logits[[b, k, t]] = *v;
                    row_buf[k] = v.f64() as f32;
                }
                let tok = match mode {
                    DecodeMode::Argmax => argmax(row_buf.iter().copied()),
                    DecodeMode::Sample { temperature } => {
                        let rng = &mut rngs.as_deref_mut().expect("checked above")[b];
                        sample_softmax(&row_buf, temperature, rng)
                    }
                };
                ids[[b, t]] = tok;
                prev[b] = tok;
            }
        }
        Ok((logits, ids))
    }

    /// Convert all parameters to another precision (used for gradient checks).
    pub fn cast<U: Real>(&self) -> OuterModel<U> {
        let dense = |l: &Dense<T>| Dense {
            w: l.w.cast(),
            b: l.b.cast(),
        };
        OuterModel {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            convs: self
                .convs
                .iter()
                .map(|c| Conv1d {
                    w: c.w.cast(),
                    b: c.b.cast(),
                    kernel: c.kernel,
                    in_channels: c.in_channels,
                })
                .collect(),
            enc_fc: self.enc_fc.iter().map(dense).collect(),
            enc_head: dense(&self.enc_head),
            dec_init: dense(&self.dec_init),
            dec_tok: self.dec_tok.cast(),
            dec_z: dense(&self.dec_z),
            dec_in: self.dec_in.iter().map(dense).collect(),
            grus: self
                .grus
                .iter()
                .map(|g| Gru {
                    wh: g.wh.cast(),
                    bh: g.bh.cast(),
                })
                .collect(),
            head: dense(&self.head),
        }
    }
}

/// Reorders time-major `(N * d, M)` rows into `(d, M, N)`.
pub fn time_major_to_dmn<T: Real>(logits: Array2<T>, d: usize, n: usize) -> Array3<T> {
    let m = logits.ncols();
    let a = logits.into_shape_with_order((n, d, m)).expect("logit reshape");
    a.permuted_axes([1, 2, 0]).as_standard_layout().into_owned()
}

impl<T: Real> Parameterized<T> for OuterModel<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut v: Vec<(String, &Param<T>)> = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            v.push((format!("enc.conv{i}.w"), &c.w));
            v.push((format!("enc.conv{i}.b"), &c.b));
        }
        for (i, f) in self.enc_fc.iter().enumerate() {
            v.push((format!("enc.fc{i}.w"), &f.w));
            v.push((format!("enc.fc{i}.b"), &f.b));
        }
        v.push(("enc.head.w".into(), &self.enc_head.w));
        v.push(("enc.head.b".into(), &self.enc_head.b));
        v.push(("dec.init.w".into(), &self.dec_init.w));
        v.push(("dec.init.b".into(), &self.dec_init.b));
        v.push(("dec.tok".into(), &self.dec_tok));
        v.push(("dec.z.w".into(), &self.dec_z.w));
        v.push(("dec.z.b".into(), &self.dec_z.b));
        for (i, f) in self.dec_in.iter().enumerate() {
            v.push((format!("dec.in{}.w", i + 1), &f.w));
            v.push((format!("dec.in{}.b", i + 1), &f.b));
        }
        for (i, g) in self.grus.iter().enumerate() {
            v.push((format!("dec.gru{i}.wh"), &g.wh));
            v.push((format!("dec.gru{i}.bh"), &g.bh));
        }
        v.push(("dec.head.w".into(), &self.head.w));
        v.push(("dec.head.b".into(), &self.head.b));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut v: Vec<(String, &mut Param<T>)> = Vec::new();
        for (i, c) in self.convs.iter_mut().enumerate() {
            v.push((format!("enc.conv{i}.w"), &mut c.w));
            v.push((format!("enc.conv{i}.b"), &mut c.b));
        }
        for (i, f) in self.enc_fc.iter_mut().enumerate() {
            v.push((format!("enc.fc{i}.w"), &mut f.w));
            v.push((format!("enc.fc{i}.b"), &mut f.b));
        }
        v.push(("enc.head.w".into(), &mut self.enc_head.w));
        v.push(("enc.head.b".into(), &mut self.enc_head.b));
        v.push(("dec.init.w".into(), &mut self.dec_init.w));
        v.push(("dec.init.b".into(), &mut self.dec_init.b));
        v.push(("dec.tok".into(), &mut self.dec_tok));
        v.push(("dec.z.w".into(), &mut self.dec_z.w));
        v.push(("dec.z.b".into(), &mut self.dec_z.b));
        for (i, f) in self.dec_in.iter_mut().enumerate() {
            v.push((format!("dec.in{}.w", i + 1), &mut f.w));
            v.push((format!("dec.in{}.b", i + 1), &mut f.b));
        }
        for (i, g) in self.grus.iter_mut().enumerate() {
            v.push((format!("dec.gru{i}.wh"), &mut g.wh));
            v.push((format!("dec.gru{i}.bh"), &mut g.bh));
        }
        v.push(("dec.head.w".into(), &mut self.head.w));
        v.push(("dec.head.b".into(), &mut self.head.b));
        v
    }
}
