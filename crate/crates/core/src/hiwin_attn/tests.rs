use super::*;
use crate::encoder::{FeatureMap, Origin};
use crate::numerics::Tensor;
use crate::vdim::InverseSemanticPyramid;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn isp_from(levels: Vec<Tensor>) -> InverseSemanticPyramid {
    InverseSemanticPyramid::new(
        levels
            .into_iter()
            .enumerate()
            .map(|(l, t)| FeatureMap::new(l, Origin::Overview, t).unwrap())
            .collect(),
    )
    .unwrap()
}

fn random_isp(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> InverseSemanticPyramid {
    isp_from((0..3).map(|l| random_tensor(rng, &[h << l, w << l, c])).collect())
}

#[test]
fn grid_for_square_map() {
    assert_eq!(select_grid(24, 24, &PROPOSALS), (3, 3));
    assert_eq!(grid_score(24, 24, (3, 3)), 0.0);
}

#[test]
fn grid_for_two_to_one() {
    assert_eq!(select_grid(48, 24, &PROPOSALS), (4, 2));
    assert!(grid_score(48, 24, (4, 2)).abs() < 1e-15);
}

#[test]
fn grid_scores_for_24_by_36() {
    let expected = [-0.405, 0.0, -0.811, -0.288, -1.099];
    for (p, e) in PROPOSALS.iter().zip(expected) {
        assert!((grid_score(24, 36, *p) - e).abs() < 1e-3, "{p:?}");
    }
    assert_eq!(select_grid(24, 36, &PROPOSALS), (2, 3));
}

#[test]
fn windows_on_24_level_are_2x2() {
    let ws = generate_windows(&[(24, 24), (96, 96)], 12).unwrap();
    for i in 0..12 {
        for j in 0..12 {
            let b = ws.get(0, i, j);
            assert_eq!((b.x0, b.y0, b.width(), b.height()), (2.0 * j as f64, 2.0 * i as f64, 2.0, 2.0));
            let big = ws.get(1, i, j);
            assert_eq!((big.width(), big.height()), (8.0, 8.0));
            assert_eq!(big.x0 / 96.0, b.x0 / 24.0);
            assert_eq!(big.y1 / 96.0, b.y1 / 24.0);
        }
    }
}

#[test]
fn fractional_windows() {
    let ws = generate_windows(&[(24, 30)], 12).unwrap();
    for j in 0..12 {
        let b = ws.get(0, 3, j);
        assert_eq!(b.x0, 2.5 * j as f64);
        assert_eq!(b.x1, 2.5 * (j + 1) as f64);
        assert_eq!(b.height(), 2.0);
    }
}

#[test]
fn roi_of_constant_map() {
    let map = Tensor::full(&[7, 5, 3], 0.25);
    let b = RoiBox { x0: 0.3, y0: 1.7, x1: 4.1, y1: 6.2 };
    let out = roi_align(&map, b, (3, 2)).unwrap();
    assert_eq!(out.shape(), &[2, 3, 3]);
    assert!(out.data().iter().all(|&v| v == 0.25));
}

#[test]
fn roi_on_ramp_matches_hand_values() {
    // value = 10 y + x on a 4x4 map
    let map = Tensor::from_hwc_fn(4, 4, 1, |y, x, _| 10.0 * y as f64 + x as f64);
    let b = RoiBox { x0: 1.0, y0: 0.0, x1: 3.0, y1: 2.0 };
    let out = roi_align(&map, b, (2, 2)).unwrap();
    // Bin centers at x in {1.5, 2.5}, y in {0.5, 1.5} land on cell centers.
    assert_eq!(out.data(), &[1.0, 2.0, 11.0, 12.0]);

    let b = RoiBox { x0: 1.0, y0: 1.0, x1: 4.0, y1: 3.0 };
    let out = roi_align(&map, b, (2, 2)).unwrap();
    // x in {1.75, 3.25} -> index 1.25, 2.75; y in {1.5, 2.5} -> 1, 2
    assert_eq!(out.data(), &[11.25, 12.75, 21.25, 22.75]);
}

#[test]
fn roi_full_map_recovers_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let map = random_tensor(&mut rng, &[5, 6, 2]);
    let b = RoiBox { x0: 0.0, y0: 0.0, x1: 6.0, y1: 5.0 };
    assert_eq!(roi_align(&map, b, (6, 5)).unwrap(), map);
}

#[test]
fn roi_zero_area_rejected() {
    let map = Tensor::zeros(&[4, 4, 1]);
    assert!(roi_align(&map, RoiBox { x0: 1.0, y0: 1.0, x1: 1.0, y1: 3.0 }, (2, 2)).is_err());
    assert!(roi_align(&map, RoiBox { x0: 5.0, y0: 0.0, x1: 7.0, y1: 3.0 }, (2, 2)).is_err());
    assert!(roi_align(&map, RoiBox { x0: 0.0, y0: 0.0, x1: 2.0, y1: 2.0 }, (0, 2)).is_err());
}

#[test]
fn roi_ignores_cells_outside_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let map = random_tensor(&mut rng, &[10, 10, 2]);
    let b = RoiBox { x0: 2.5, y0: 3.0, x1: 5.0, y1: 5.0 };
    let base = roi_align(&map, b, (3, 3)).unwrap();
    let mut masked = map.clone();
    for y in 0..10 {
        for x in 0..10 {
            if !(3..5).contains(&y) || !(2..5).contains(&x) {
                masked.pixel_mut(y, x).iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    assert_eq!(roi_align(&masked, b, (3, 3)).unwrap(), base);
}

#[test]
fn kv_length_is_three_levels_of_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let isp = random_isp(&mut rng, 6, 6, 8);
    let cfg = HiwinConfig { n: 3, ..HiwinConfig::default() };
    let params = AttnParams::init(&cfg, 8, 0).unwrap();
    let ws = isp_windows(&isp, 3).unwrap();
    let kv = assemble_kv(&isp, &ws, (3, 3), &params, (1, 2)).unwrap();
    assert_eq!(kv.keys.shape(), &[27, 8]);
    assert_eq!(kv.values.shape(), &[27, 8]);
}

#[test]
fn identical_levels_give_identical_key_blocks() {
    let cfg = HiwinConfig { n: 2, ..HiwinConfig::default() };
    let mut params = AttnParams::init(&cfg, 8, 1).unwrap();
    params.level_embed = Tensor::zeros(&[3, 8]);
    let v: Vec<f64> = (0..8).map(|k| k as f64 * 0.1 - 0.3).collect();
    let isp = isp_from((0..3).map(|l| Tensor::from_hwc_fn(4 << l, 4 << l, 8, |_, _, c| v[c])).collect());
    let ws = isp_windows(&isp, 2).unwrap();
    let kv = assemble_kv(&isp, &ws, (2, 3), &params, (1, 0)).unwrap();
    let blocks: Vec<&[f64]> = kv.keys.data().chunks_exact(6 * 8).collect();
    for other in &blocks[1..] {
        for (a, b) in blocks[0].iter().zip(*other) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn swapping_level_embeddings_swaps_offsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let isp = random_isp(&mut rng, 4, 6, 8);
    let cfg = HiwinConfig { n: 2, ..HiwinConfig::default() };
    let params = AttnParams::init(&cfg, 8, 2).unwrap();
    let mut swapped = params.clone();
    let (p1, p2) = (params.level(1).to_vec(), params.level(2).to_vec());
    swapped.level_embed.data_mut()[8..16].copy_from_slice(&p2);
    swapped.level_embed.data_mut()[16..24].copy_from_slice(&p1);
    let ws = isp_windows(&isp, 2).unwrap();
    let a = assemble_kv(&isp, &ws, (3, 2), &params, (0, 1)).unwrap();
    let b = assemble_kv(&isp, &ws, (3, 2), &swapped, (0, 1)).unwrap();
    assert_eq!(a.values, b.values);
    let rows = 6;
    for r in 0..3 * rows {
        let level = r / rows;
        for c in 0..8 {
            let delta = b.keys.data()[r * 8 + c] - a.keys.data()[r * 8 + c];
            let expected = match level {
                0 => 0.0,
                1 => p2[c] - p1[c],
                _ => p1[c] - p2[c],
            };
            assert!((delta - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_values_give_projected_constant() {
    let cfg = HiwinConfig { n: 4, ..HiwinConfig::default() };
    let params = AttnParams::init(&cfg, 8, 5).unwrap();
    let v: Vec<f64> = (0..8).map(|k| (k as f64).sin()).collect();
    let isp = isp_from((0..3).map(|l| Tensor::from_hwc_fn(8 << l, 12 << l, 8, |_, _, c| v[c])).collect());
    let tokens = compress(&isp, &params, &cfg).unwrap();
    let mut pv = vec![0.0; 8];
    params.v_proj.apply(&v, &mut pv);
    let mut expected = vec![0.0; 8];
    params.out_proj.apply(&pv, &mut expected);
    for i in 0..4 {
        for j in 0..4 {
            for (a, b) in tokens.token(i, j).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

fn matvec(x: &[f64], l: &Linear) -> Vec<f64> {
    let (ci, co) = (l.c_in(), l.c_out());
    (0..co)
        .map(|o| l.bias.data()[o] + (0..ci).map(|i| x[i] * l.weight.data()[i * co + o]).sum::<f64>())
        .collect()
}

#[test]
fn single_query_matches_hand_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = HiwinConfig { n: 1, heads: 1, ..HiwinConfig::default() };
    let params = AttnParams::init(&cfg, 4, 7).unwrap();
    let vals: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let isp = isp_from((0..3).map(|l| Tensor::from_hwc_fn(1 << l, 1 << l, 4, |_, _, c| vals[l][c])).collect());
    let got = compress(&isp, &params, &cfg).unwrap();

    let pi = std::f64::consts::PI;
    let emb = |y: f64, x: f64| [(pi * y).sin(), (pi * y).cos(), (pi * x).sin(), (pi * x).cos()];
    let qe = emb(0.5, 0.5);
    let q_in: Vec<f64> = (0..4).map(|c| params.queries.data()[c] + qe[c]).collect();
    let q = matvec(&q_in, &params.q_proj);
    let mut logits = Vec::new();
    let mut values = Vec::new();
    for (l, v) in vals.iter().enumerate() {
        for r in 0..3 {
            for s in 0..3 {
                let e = emb((r as f64 + 0.5) / 3.0, (s as f64 + 0.5) / 3.0);
                let key: Vec<f64> = (0..4).map(|c| v[c] + params.level_embed.data()[l * 4 + c] + e[c]).collect();
                let k = matvec(&key, &params.k_proj);
                logits.push(q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() / 2.0);
                values.push(matvec(v, &params.v_proj));
            }
        }
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let mixed: Vec<f64> = (0..4)
        .map(|c| logits.iter().zip(&values).map(|(l, v)| (l - m).exp() / z * v[c]).sum())
        .collect();
    let expected = matvec(&mixed, &params.out_proj);
    for (a, b) in got.token(0, 0).iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn slice_pyramid_gives_144_tokens() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let isp = random_isp(&mut rng, 24, 24, 8);
    let cfg = HiwinConfig::default();
    let params = AttnParams::init(&cfg, 8, 0).unwrap();
    let t = compress(&isp, &params, &cfg).unwrap();
    assert_eq!(t.data.shape(), &[12, 12, 8]);
}

#[test]
fn non_square_maps_give_n_by_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let isp = random_isp(&mut rng, 16, 24, 8);
    let cfg = HiwinConfig::default();
    let params = AttnParams::init(&cfg, 8, 0).unwrap();
    assert_eq!(isp_grid(&isp, &cfg), (3, 2));
    assert_eq!(compress(&isp, &params, &cfg).unwrap().data.shape(), &[12, 12, 8]);
}

#[test]
fn attention_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let isp = random_isp(&mut rng, 8, 8, 8);
    let cfg = HiwinConfig { n: 4, ..HiwinConfig::default() };
    let mut params = AttnParams::init(&cfg, 8, 3).unwrap();
    params.q_proj.weight = params.q_proj.weight.map(|v| 20.0 * v);
    let ws = isp_windows(&isp, 4).unwrap();
    for (i, j) in [(0, 0), (1, 3), (3, 2)] {
        let a = attend_window(&isp, &ws, (3, 3), &params, (i, j)).unwrap();
        assert_eq!(a.weights.len(), 4);
        for row in &a.weights {
            assert_eq!(row.len(), 27);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn params_round_trip_through_tensors() {
    let cfg = HiwinConfig::default();
    let p = AttnParams::init(&cfg, 16, 4).unwrap();
    let tensors: Vec<Tensor> = p.tensors().into_iter().cloned().collect();
    assert_eq!(tensors.len(), 10);
    assert_eq!(AttnParams::from_tensors(tensors, 4).unwrap(), p);
    assert!(AttnParams::init(&cfg, 6, 0).is_err());
}

#[test]
fn embedding_is_bounded_and_distinguishes_points() {
    let mut a = vec![0.0; 16];
    let mut b = vec![0.0; 16];
    sinusoidal_2d(0.2, 0.7, &mut a);
    sinusoidal_2d(0.7, 0.2, &mut b);
    assert!(a.iter().all(|v| v.abs() <= 1.0));
    assert_ne!(a, b);
}
