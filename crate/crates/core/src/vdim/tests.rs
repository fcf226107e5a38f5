use super::*;
use crate::encoder::Origin;
use crate::image_io::build_image_pyramid;
use crate::numerics::{bilinear_resize, grad_check};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    Image::from_fn(h, w, |_, _| [rng.random(), rng.random(), rng.random()])
}

fn map(level: usize, t: Tensor) -> FeatureMap {
    FeatureMap::new(level, Origin::Overview, t).unwrap()
}

#[test]
fn constant_inputs_give_constant_output() {
    let params = VdimParams::init(1);
    let f = map(0, Tensor::full(&[4, 6, 3], 0.37));
    let img = Image::constant(8, 12, [0.2, 0.9, 0.4]);
    let out = jbu_upsample(&f, &img, &params, 0).unwrap();
    assert_eq!(out.dims(), (8, 12));
    assert_eq!(out.level, 1);
    assert!(out.data.data().iter().all(|v| (v - 0.37).abs() < 1e-6));
}

#[test]
fn output_doubles_dims() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let f = map(0, random_tensor(&mut rng, &[8, 8, 5], -1.0, 1.0));
    let img = random_image(&mut rng, 16, 16);
    let out = jbu_upsample(&f, &img, &VdimParams::init(0), 0).unwrap();
    assert_eq!(out.data.shape(), &[16, 16, 5]);
}

#[test]
fn mismatched_guidance_rejected() {
    let f = map(0, Tensor::zeros(&[8, 8, 2]));
    let img = Image::constant(15, 16, [0.0; 3]);
    assert!(jbu_upsample(&f, &img, &VdimParams::init(0), 0).is_err());
}

#[test]
fn wide_spatial_kernel_on_uniform_image_is_local_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = VdimParams::init(2);
    params.levels[0].log_sigma_dist = Tensor::scalar(40.0);
    let feats = random_tensor(&mut rng, &[5, 4, 3], -1.0, 1.0);
    let img = Image::constant(10, 8, [0.6, 0.3, 0.8]);
    let out = jbu_upsample(&map(0, feats.clone()), &img, &params, 0).unwrap();

    // Oracle: plain average of the bilinear upsample over the clamped 7x7
    // neighborhood.
    let up = bilinear_resize(&feats, 10, 8).unwrap();
    for y in 0..10usize {
        for x in 0..8usize {
            for c in 0..3 {
                let mut acc = 0.0;
                for dy in -3i64..=3 {
                    for dx in -3i64..=3 {
                        let qy = (y as i64 + dy).clamp(0, 9) as usize;
                        let qx = (x as i64 + dx).clamp(0, 7) as usize;
                        acc += up.at3(qy, qx, c);
                    }
                }
                let expected = acc / 49.0;
                assert!((out.data.at3(y, x, c) - expected).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn kernel_is_normalized_product_of_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut params = VdimParams::init(5);
    params.levels[0].proj_weight = random_tensor(&mut rng, &[3, GUIDANCE_DIM], -1.0, 1.0);
    params.levels[0].log_sigma_dist = Tensor::scalar(0.3);
    params.levels[0].log_sigma_sim = Tensor::scalar(-0.4);
    let img = random_image(&mut rng, 12, 10);
    for (y, x) in [(0, 0), (5, 4), (11, 9), (2, 8)] {
        let k = kernel_at(&img, &params.levels[0], DEFAULT_RADIUS, y, x);
        let sim_total: f64 = k.sim.iter().sum();
        let total: f64 = k.combined.iter().sum();
        assert!((sim_total - 1.0).abs() < 1e-12);
        assert!((total - 1.0).abs() < 1e-12);
    }

    // The fused forward pass uses exactly these weights.
    let feats = random_tensor(&mut rng, &[6, 5, 2], -1.0, 1.0);
    let out = jbu_upsample(&map(0, feats.clone()), &img, &params, 0).unwrap();
    let up = bilinear_resize(&feats, 12, 10).unwrap();
    let (y, x) = (7usize, 3usize);
    let k = kernel_at(&img, &params.levels[0], DEFAULT_RADIUS, y, x);
    let mut expected = [0.0; 2];
    let mut n = 0;
    for dy in -3i64..=3 {
        for dx in -3i64..=3 {
            let qy = (y as i64 + dy).clamp(0, 11) as usize;
            let qx = (x as i64 + dx).clamp(0, 9) as usize;
            for (c, e) in expected.iter_mut().enumerate() {
                *e += k.combined[n] * up.at3(qy, qx, c);
            }
            n += 1;
        }
    }
    for (c, e) in expected.iter().enumerate() {
        assert!((out.data.at3(y, x, c) - e).abs() < 1e-12);
    }
}

#[test]
fn isp_dims_for_rectangular_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = random_image(&mut rng, 224, 336);
    let pyr = build_image_pyramid(&img, 14, 3).unwrap();
    let f0 = map(0, random_tensor(&mut rng, &[16, 24, 4], -1.0, 1.0));
    let isp = build_isp(&f0, &pyr, &VdimParams::init(0)).unwrap();
    assert_eq!(isp.dims(), vec![(16, 24), (32, 48), (64, 96)]);
}

#[test]
fn constant_isp_chain() {
    let img = Image::constant(112, 112, [0.5; 3]);
    let pyr = build_image_pyramid(&img, 14, 3).unwrap();
    let f0 = map(0, Tensor::full(&[8, 8, 3], -0.25));
    let isp = build_isp(&f0, &pyr, &VdimParams::init(0)).unwrap();
    for level in &isp.levels {
        assert!(level.data.data().iter().all(|v| (v + 0.25).abs() < 1e-6));
    }
}

#[test]
fn uniform_saliency_on_constant_features_is_constant() {
    let down = DownsamplerParams::init(3);
    let high = map(1, Tensor::full(&[8, 8, 3], 1.5));
    let out = attention_downsample(&high, (56, 56), &down, 14).unwrap();
    assert_eq!(out.dims(), (4, 4));
    assert!(out.data.data().iter().all(|v| (v - 1.5).abs() < 1e-12));
}

#[test]
fn uniform_saliency_is_window_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let down = DownsamplerParams::init(2);
    let feats = random_tensor(&mut rng, &[4, 6, 2], -1.0, 1.0);
    let out = attention_downsample(&map(1, feats.clone()), (28, 42), &down, 14).unwrap();
    let up = bilinear_resize(&feats, 28, 42).unwrap();
    for gy in 0..2 {
        for gx in 0..3 {
            for c in 0..2 {
                let mut acc = 0.0;
                for py in 0..14 {
                    for px in 0..14 {
                        acc += up.at3(gy * 14 + py, gx * 14 + px, c);
                    }
                }
                assert!((out.data.at3(gy, gx, c) - acc / 196.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn sharp_saliency_picks_argmax_pixel() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut down = DownsamplerParams::init(3);
    down.levels[1].saliency = Tensor::new(vec![3], vec![1e6, 0.0, 0.0]).unwrap();
    let feats = random_tensor(&mut rng, &[8, 8, 3], -1.0, 1.0);
    let out = attention_downsample(&map(2, feats.clone()), (28, 28), &down, 14).unwrap();
    assert_eq!(out.dims(), (2, 2));
    let up = bilinear_resize(&feats, 28, 28).unwrap();
    for gy in 0..2 {
        for gx in 0..2 {
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for py in 0..14 {
                for px in 0..14 {
                    let (y, x) = (gy * 14 + py, gx * 14 + px);
                    if up.at3(y, x, 0) > best.0 {
                        best = (up.at3(y, x, 0), y, x);
                    }
                }
            }
            for c in 0..3 {
                assert!((out.data.at3(gy, gx, c) - up.at3(best.1, best.2, c)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn saliency_weights_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut down = DownsamplerParams::init(4);
    down.levels[0].saliency = random_tensor(&mut rng, &[4], -30.0, 30.0);
    let feats = random_tensor(&mut rng, &[6, 6, 4], -1.0, 1.0);
    for (gy, gx) in [(0, 0), (1, 2), (2, 1)] {
        let w = window_weights(&feats, (42, 42), &down.levels[0], 14, gy, gx).unwrap();
        assert_eq!(w.len(), 196);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn downsampler_rejects_bad_image_dims() {
    let down = DownsamplerParams::init(2);
    let high = map(1, Tensor::zeros(&[4, 4, 2]));
    assert!(attention_downsample(&high, (30, 28), &down, 14).is_err());
}

#[test]
fn hand_evaluated_mlr() {
    let f0 = Tensor::full(&[1, 1, 1], 2.0);
    let d1 = Tensor::full(&[1, 1, 1], 3.0);
    let d2 = Tensor::full(&[1, 1, 1], 1.0);
    assert_eq!(mlr_from_downsampled(&f0, &d1, &d2).unwrap(), 1.0);
}

#[test]
fn zero_residual_mlr() {
    let img = Image::constant(56, 56, [0.3; 3]);
    let pyr = build_image_pyramid(&img, 14, 3).unwrap();
    let f0 = map(0, Tensor::full(&[4, 4, 2], 0.8));
    let isp = build_isp(&f0, &pyr, &VdimParams::init(1)).unwrap();
    let loss = mlr_loss(&isp, &DownsamplerParams::init(2), (56, 56), 14).unwrap();
    assert!(loss < 1e-10);
}

fn toy_problem(seed: u64) -> (Tensor, ImagePyramid, VdimParams, DownsamplerParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = random_image(&mut rng, 56, 56);
    let pyr = build_image_pyramid(&img, 14, 3).unwrap();
    let f0 = random_tensor(&mut rng, &[4, 4, 3], -1.0, 1.0);
    let mut vdim = VdimParams::init_with(seed, 4, 2);
    for l in &mut vdim.levels {
        l.proj_weight = random_tensor(&mut rng, &[3, 4], -1.0, 1.0);
        l.proj_bias = random_tensor(&mut rng, &[4], -0.5, 0.5);
        l.log_sigma_dist = Tensor::scalar(rng.random_range(-0.3..0.3));
        l.log_sigma_sim = Tensor::scalar(rng.random_range(-0.3..0.3));
    }
    let mut down = DownsamplerParams::init(3);
    for l in &mut down.levels {
        l.saliency = random_tensor(&mut rng, &[3], -2.0, 2.0);
        l.scale = random_tensor(&mut rng, &[3], 0.5, 1.5);
        l.shift = random_tensor(&mut rng, &[3], -0.2, 0.2);
    }
    (f0, pyr, vdim, down)
}

fn flatten(vdim: &VdimParams, down: &DownsamplerParams) -> Vec<f64> {
    vdim.tensors()
        .into_iter()
        .chain(down.tensors())
        .flat_map(|t| t.data().to_vec())
        .collect()
}

fn unflatten(values: &[f64], vdim: &mut VdimParams, down: &mut DownsamplerParams) {
    let mut offset = 0;
    for t in vdim.tensors_mut().into_iter().chain(down.tensors_mut()) {
        let n = t.len();
        t.data_mut().copy_from_slice(&values[offset..offset + n]);
        offset += n;
    }
}

#[test]
fn tape_loss_matches_direct_loss() {
    let (f0, pyr, vdim, down) = toy_problem(21);
    let (tape_loss, grads) = mlr_loss_and_grads(&f0, &pyr, &vdim, &down).unwrap();
    let isp = build_isp(&map(0, f0), &pyr, &vdim).unwrap();
    let direct = mlr_loss(&isp, &down, (56, 56), 14).unwrap();
    assert!((tape_loss - direct).abs() < 1e-14);
    assert_eq!(grads.len(), 14);
    for (g, p) in grads.iter().zip(vdim.tensors().into_iter().chain(down.tensors())) {
        assert_eq!(g.shape(), p.shape());
    }
}

#[test]
fn gradients_match_finite_differences() {
    let (f0, pyr, vdim, down) = toy_problem(5);
    let (_, grads) = mlr_loss_and_grads(&f0, &pyr, &vdim, &down).unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
    let x0 = flatten(&vdim, &down);
    let err = grad_check(
        |x| {
            let (mut v, mut d) = (vdim.clone(), down.clone());
            unflatten(x, &mut v, &mut d);
            let isp = build_isp(&map(0, f0.clone()), &pyr, &v).unwrap();
            mlr_loss(&isp, &d, (56, 56), 14).unwrap()
        },
        &x0,
        &analytic,
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn zero_steps_leaves_params() {
    let corpus = crate::image_io::synth_corpus(1, 2, 56);
    let enc = crate::encoder::EncoderSpec::synthetic(4, 0);
    let mut vdim = VdimParams::init(0);
    let mut down = DownsamplerParams::init(4);
    let before = (vdim.clone(), down.clone());
    let cfg = TrainConfig { steps: 0, lr: 1e-3, batch: 2, seed: 0 };
    let report = pretrain_vdim(&corpus, &enc, &mut vdim, &mut down, &cfg).unwrap();
    assert_eq!(report.loss_curve.len(), 1);
    assert_eq!((vdim, down), before);
    assert_eq!(report.final_loss, report.initial_loss);
}

#[test]
fn short_training_is_deterministic() {
    let corpus = crate::image_io::synth_corpus(2, 3, 56);
    let enc = crate::encoder::EncoderSpec::synthetic(4, 1);
    let cfg = TrainConfig { steps: 3, lr: 1e-3, batch: 2, seed: 9 };
    let run = || {
        let mut vdim = VdimParams::init(0);
        let mut down = DownsamplerParams::init(4);
        let r = pretrain_vdim(&corpus, &enc, &mut vdim, &mut down, &cfg).unwrap();
        (r, vdim)
    };
    let (a, va) = run();
    let (b, vb) = run();
    assert_eq!(a, b);
    assert_eq!(va, vb);
    assert_eq!(a.loss_curve.len(), 4);
}

#[test]
fn empty_corpus_rejected() {
    let enc = crate::encoder::EncoderSpec::synthetic(4, 1);
    let r = pretrain_vdim(&[], &enc, &mut VdimParams::init(0), &mut DownsamplerParams::init(4), &TrainConfig::default());
    assert!(r.is_err());
}

#[test]
fn library_gradient_check_agrees() {
    let (f0, pyr, vdim, down) = toy_problem(8);
    let err = mlr_gradient_check(&f0, &pyr, &vdim, &down, 1e-4).unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}
