#![allow(dead_code)]

use matvae::inner::{corr_loss, InnerModel, InnerModelConfig, PropertyBinding};
use matvae::nn::Parameterized;
use matvae::outer::{OuterModel, OuterModelConfig};
use matvae::rng::{standard_normal, substream};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

fn stencil(mut at: impl FnMut(f64) -> f64, x: f64) -> f64 {
    let (p1, m1, p2, m2) = (at(x + H), at(x - H), at(x + 2.0 * H), at(x - 2.0 * H));
    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * H)
}

/// Largest relative error between accumulated gradients and fourth-order
/// central differences over `samples` random coordinates per tensor.
pub fn max_grad_error<M, F>(model: &mut M, loss: F, samples: usize, seed: u64) -> f64
where
    M: Parameterized<f64>,
    F: Fn(&M) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
    let mut worst: f64 = 0.0;
    for (pi, name) in names.iter().enumerate() {
        let len = model.params()[pi].1.value.len();
        for _ in 0..samples.min(len) {
            let k = rng.random_range(0..len);
            let (analytic, orig) = {
                let p = &model.params()[pi].1;
                (p.grad.as_slice().unwrap()[k], p.value.as_slice().unwrap()[k])
            };
            let numeric = stencil(
                |x| {
                    set(model, pi, k, x);
                    loss(model)
                },
                orig,
            );
            set(model, pi, k, orig);
            let err = rel_err(analytic, numeric);
            worst = worst.max(err);
            assert!(err < TOL, "{name}[{k}]: analytic {analytic} numeric {numeric}");
        }
    }
    worst
}

fn set<M: Parameterized<f64>>(model: &mut M, pi: usize, k: usize, v: f64) {
    model.params_mut()[pi].1.value.as_slice_mut().unwrap()[k] = v;
}

pub fn tiny_outer() -> OuterModelConfig {
    OuterModelConfig {
        latent_dim: 4,
        max_len: 8,
        conv_channels: vec![3, 4],
        conv_kernels: vec![3, 2],
        fc_widths: vec![5],
        gru_hidden: 6,
        gru_layers: 2,
        ..OuterModelConfig::default()
    }
}

pub fn tiny_inner(alpha: f64) -> InnerModelConfig {
    InnerModelConfig {
        latent_dim: 3,
        enc_widths: vec![7, 5],
        dec_widths: vec![6],
        alpha,
        bindings: vec![
            PropertyBinding::new(0, 0),
            PropertyBinding {
                property: 1,
                component: 2,
                direction: -1,
            },
        ],
        kl_weight: 0.8,
        ..InnerModelConfig::default()
    }
}

/// Outer VAE loss at random parameter point `point`; returns the worst error.
pub fn outer_point(point: u64) -> f64 {
    let cfg = tiny_outer();
    let vocab = 7;
    let mut rng = substream(point, "gradcheck-outer");
    let mut model = OuterModel::<f64>::new(&cfg, vocab, &mut rng).unwrap();
    let ids = Array2::from_shape_simple_fn((3, cfg.max_len), || rng.random_range(0..vocab));
    let noise = standard_normal::<f64, _>(3, cfg.latent_dim, &mut rng);
    let kl_w = 0.7;
    let (_, cache) = model.forward_loss(ids.view(), noise.view(), kl_w, None).unwrap();
    model.zero_grad();
    model.backward(&cache);
    let loss = |m: &OuterModel<f64>| m.forward_loss(ids.view(), noise.view(), kl_w, None).unwrap().0.total;
    max_grad_error(&mut model, loss, 6, point)
}

/// Correlation term with respect to every entry of a random latent batch.
pub fn corr_point(point: u64) -> f64 {
    let mut rng = substream(point, "gradcheck-corr");
    let z = standard_normal::<f64, _>(9, 3, &mut rng);
    let y = standard_normal::<f64, _>(9, 2, &mut rng);
    let binds = tiny_inner(1.0).bindings;
    let (_, grad) = corr_loss(z.view(), y.view(), &binds);
    let mut worst: f64 = 0.0;
    for ((i, j), &analytic) in grad.indexed_iter() {
        let numeric = stencil(
            |x| {
                let mut zz = z.clone();
                zz[[i, j]] = x;
                corr_loss(zz.view(), y.view(), &binds).0
            },
            z[[i, j]],
        );
        let err = rel_err(analytic, numeric);
        worst = worst.max(err);
        assert!(err < TOL, "z[{i},{j}]: analytic {analytic} numeric {numeric}");
    }
    worst
}

/// Combined inner loss (reconstruction, KL and correlation) over the inner
/// model's parameters.
pub fn inner_total_point(point: u64) -> f64 {
    let cfg = tiny_inner(2.5);
    let mut rng = substream(point, "gradcheck-inner");
    let mut model = InnerModel::<f64>::new(&cfg, 8, &mut rng).unwrap();
    let x = standard_normal::<f64, _>(10, 8, &mut rng);
    let y = standard_normal::<f64, _>(10, 2, &mut rng);
    let noise = standard_normal::<f64, _>(10, cfg.latent_dim, &mut rng);
    let (_, cache) = model.forward_loss(x.view(), y.view(), noise.view(), true).unwrap();
    model.zero_grad();
    model.backward(&cache);
    let loss = |m: &InnerModel<f64>| m.forward_loss(x.view(), y.view(), noise.view(), true).unwrap().0.total;
    max_grad_error(&mut model, loss, 8, point)
}
