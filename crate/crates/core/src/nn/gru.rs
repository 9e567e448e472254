use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use super::{gemm, Param, Real};

/// Recurrent core of a GRU layer (gate order r, z, n).
///
/// The input projection `x W_x + b_x` is computed by the caller for all time
/// steps at once and passed in as `gx: (N, d, 3H)`; this type owns only the
/// hidden-to-hidden weights:
///
/// ```text
/// r  = σ(gx_r + h W_hr + b_hr)
/// z  = σ(gx_z + h W_hz + b_hz)
/// n  = tanh(gx_n + r ⊙ (h W_hn + b_hn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru<T: Real> {
    pub wh: Param<T>,
    pub bh: Param<T>,
}

pub struct GruCache<T: Real> {
    h0: Array2<T>,
    r: Array3<T>,
    z: Array3<T>,
    n: Array3<T>,
    hn: Array3<T>,
}

impl<T: Real> Gru<T> {
    pub fn new<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            wh: Param::uniform(hidden, 3 * hidden, bound, rng),
            bh: Param::uniform(1, 3 * hidden, bound, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.value.nrows()
    }

    fn hidden_proj(&self, h: ArrayView2<T>, out: &mut Array2<T>) {
        let dim = out.raw_dim();
        out.assign(&self.bh.value.broadcast(dim).expect("bias broadcast"));
        gemm(h, self.wh.value.view(), T::one(), out);
    }

    /// One step without caching, for free-running decoding.
    pub fn step(&self, gx: ArrayView2<T>, h: ArrayView2<T>) -> Array2<T> {
        let (d, hd) = h.dim();
        let mut hw = Array2::zeros((d, 3 * hd));
        self.hidden_proj(h, &mut hw);
        let gx = gx.as_standard_layout();
        let h = h.as_standard_layout();
        let mut out = Array2::zeros((d, hd));
        let (gxs, hws, hs) = (gx.as_slice().unwrap(), hw.as_slice().unwrap(), h.as_slice().unwrap());
        let os = out.as_slice_mut().unwrap();
        for b in 0..d {
            let (g, w) = (&gxs[3 * hd * b..3 * hd * (b + 1)], &hws[3 * hd * b..3 * hd * (b + 1)]);
            for j in 0..hd {
                let r = (g[j] + w[j]).sigmoid();
                let z = (g[hd + j] + w[hd + j]).sigmoid();
                let n = (g[2 * hd + j] + r * w[2 * hd + j]).tanh_fast();
                os[b * hd + j] = (T::one() - z) * n + z * hs[b * hd + j];
            }
        }
        out
    }

    /// Runs all `N` steps; returns hidden states `(N, d, H)`.
    pub fn forward(&self, gx: ArrayView3<T>, h0: ArrayView2<T>) -> (Array3<T>, GruCache<T>) {
        let (steps, d, g) = gx.dim();
        let hd = self.hidden();
        assert_eq!(g, 3 * hd, "gru input projection width");
        let gx = gx.as_standard_layout();
        let gxs = gx.as_slice().unwrap();
        let mut hs = Array3::zeros((steps, d, hd));
        let mut r = Array3::zeros((steps, d, hd));
        let mut z = Array3::zeros((steps, d, hd));
        let mut n = Array3::zeros((steps, d, hd));
        let mut hn = Array3::zeros((steps, d, hd));
        let mut hw = Array2::zeros((d, 3 * hd));
        let mut h = h0.to_owned();
        let (rs, zs, ns, hns) = (
            r.as_slice_mut().unwrap(),
            z.as_slice_mut().unwrap(),
            n.as_slice_mut().unwrap(),
            hn.as_slice_mut().unwrap(),
        );
        let hss = hs.as_slice_mut().unwrap();
        for t in 0..steps {
            self.hidden_proj(h.view(), &mut hw);
            let hws = hw.as_slice().unwrap();
            let hcur = h.as_slice_mut().unwrap();
            for b in 0..d {
                let row = (t * d + b) * 3 * hd;
                let gr = &gxs[row..row + 3 * hd];
                let wr = &hws[3 * hd * b..3 * hd * (b + 1)];
                let o = (t * d + b) * hd;
                for j in 0..hd {
                    let rv = (gr[j] + wr[j]).sigmoid();
                    let zv = (gr[hd + j] + wr[hd + j]).sigmoid();
                    let hnv = wr[2 * hd + j];
                    let nv = (gr[2 * hd + j] + rv * hnv).tanh_fast();
                    let hv = (T::one() - zv) * nv + zv * hcur[b * hd + j];
                    rs[o + j] = rv;
                    zs[o + j] = zv;
                    ns[o + j] = nv;
                    hns[o + j] = hnv;
                    hss[o + j] = hv;
                    hcur[b * hd + j] = hv;
                }
            }
        }
        let cache = GruCache {
            h0: h0.to_owned(),
            r,
            z,
            n,
            hn,
        };
        (hs, cache)
    }

    /// Backpropagates `dhs = dL/dh_t` for every step. Accumulates `W_h`, `b_h`
    /// gradients and returns `(dL/dgx, dL/dh0)`.
    pub fn backward(&mut self, cache: &GruCache<T>, hs: ArrayView3<T>, dhs: ArrayView3<T>) -> (Array3<T>, Array2<T>) {
        let (steps, d, hd) = hs.dim();
        let mut dgx = Array3::zeros((steps, d, 3 * hd));
        let mut dhw_all = Array2::zeros((steps * d, 3 * hd));
        let mut dh_next: Array2<T> = Array2::zeros((d, hd));
        let wh_t = self.wh.value.t();
        let hs_std = hs.as_standard_layout();
        let dhs = dhs.as_standard_layout();
        let (hsl, dhsl) = (hs_std.as_slice().unwrap(), dhs.as_slice().unwrap());
        let h0 = cache.h0.as_standard_layout();
        let h0s = h0.as_slice().unwrap();
        let (rs, zs, ns, hns) = (
            cache.r.as_slice().unwrap(),
            cache.z.as_slice().unwrap(),
            cache.n.as_slice().unwrap(),
            cache.hn.as_slice().unwrap(),
        );
        let dgxs = dgx.as_slice_mut().unwrap();
        for t in (0..steps).rev() {
            let h_prev = if t == 0 {
                h0s
            } else {
                &hsl[(t - 1) * d * hd..t * d * hd]
            };
            let mut dh_prev = Array2::zeros((d, hd));
            {
                let dhws = &mut dhw_all.as_slice_mut().unwrap()[t * d * 3 * hd..(t + 1) * d * 3 * hd];
                let dhn = dh_next.as_slice().unwrap();
                let dhp = dh_prev.as_slice_mut().unwrap();
                for b in 0..d {
                    let o = (t * d + b) * hd;
                    let go = (t * d + b) * 3 * hd;
                    for j in 0..hd {
                        let dh = dhsl[o + j] + dhn[b * hd + j];
                        let (rv, zv, nv, hnv) = (rs[o + j], zs[o + j], ns[o + j], hns[o + j]);
                        let hp = h_prev[b * hd + j];
                        let dn = dh * (T::one() - zv);
                        let dz = dh * (hp - nv);
                        let da_n = dn * (T::one() - nv * nv);
                        let dr = da_n * hnv;
                        let da_r = dr * rv * (T::one() - rv);
                        let da_z = dz * zv * (T::one() - zv);
                        dgxs[go + j] = da_r;
                        dgxs[go + hd + j] = da_z;
                        dgxs[go + 2 * hd + j] = da_n;
                        let wo = b * 3 * hd;
                        dhws[wo + j] = da_r;
                        dhws[wo + hd + j] = da_z;
                        dhws[wo + 2 * hd + j] = da_n * rv;
                        dhp[b * hd + j] = dh * zv;
                    }
                }
            }
            let dhw = dhw_all.slice(s![t * d..(t + 1) * d, ..]);
            gemm(dhw, wh_t, T::one(), &mut dh_prev);
            dh_next = dh_prev;
        }
        let mut h_prev_all = Array2::zeros((steps * d, hd));
        h_prev_all.slice_mut(s![0..d, ..]).assign(&cache.h0);
        if steps > 1 {
            let prev = hs
                .slice(s![0..steps - 1, .., ..])
                .to_owned()
                .into_shape_with_order(((steps - 1) * d, hd))
                .expect("hidden reshape");
            h_prev_all.slice_mut(s![d.., ..]).assign(&prev);
        }
        gemm(h_prev_all.t(), dhw_all.view(), T::one(), &mut self.wh.grad);
        self.bh.grad += &dhw_all.sum_axis(Axis(0)).insert_axis(Axis(0));
        (dgx, dh_next)
    }
}
