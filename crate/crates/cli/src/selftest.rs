//! Self-contained checks: grid selection against exhaustive scoring,
//! RoI-align against a scalar bilinear oracle, and tape gradients against
//! central differences.

use std::process::ExitCode;

use hiwin_core::encoder::{encode, EncoderSpec, Origin};
use hiwin_core::hiwin_attn::{grid_score, roi_align, select_grid, RoiBox, PROPOSALS};
use hiwin_core::image_io::{build_image_pyramid, synth_corpus};
use hiwin_core::numerics::Tensor;
use hiwin_core::vdim::{mlr_gradient_check, DownsamplerParams, VdimParams};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid_selection(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(8..=512), rng.random_range(8..=512));
        let scores: Vec<f64> = PROPOSALS.iter().map(|&p| grid_score(w, h, p)).collect();
        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let expected = PROPOSALS[scores.iter().position(|&s| s == best).expect("max is attained")];
        if select_grid(w, h, &PROPOSALS) != expected {
            mismatches += 1;
        }
    }
    if mismatches == 0 {
        Ok("1000 pairs agree".into())
    } else {
        Err(format!("{mismatches} of 1000 grid choices disagree"))
    }
}

fn roi_oracle(map: &Tensor, b: RoiBox, grid: (usize, usize)) -> Vec<f64> {
    let (h, w, c) = map.hwc().expect("rank-3 map");
    let span = |lo: f64, hi: f64, len: usize| {
        let first = (lo.floor() as usize).min(len - 1);
        (first, ((hi.ceil() as usize).saturating_sub(1)).clamp(first, len - 1))
    };
    let (ys, xs) = (span(b.y0, b.y1, h), span(b.x0, b.x1, w));
    let tap = |p: f64, (lo, hi): (usize, usize)| {
        let p = p.clamp(lo as f64, hi as f64);
        let i = p.floor() as usize;
        (i, (i + 1).min(hi), p - i as f64)
    };
    let mut out = Vec::new();
    for r in 0..grid.1 {
        for k in 0..grid.0 {
            let y = b.y0 + (r as f64 + 0.5) * (b.y1 - b.y0) / grid.1 as f64 - 0.5;
            let x = b.x0 + (k as f64 + 0.5) * (b.x1 - b.x0) / grid.0 as f64 - 0.5;
            let (y0, y1, fy) = tap(y, ys);
            let (x0, x1, fx) = tap(x, xs);
            for ch in 0..c {
                out.push(
                    map.at3(y0, x0, ch) * (1.0 - fy) * (1.0 - fx)
                        + map.at3(y0, x1, ch) * (1.0 - fy) * fx
                        + map.at3(y1, x0, ch) * fy * (1.0 - fx)
                        + map.at3(y1, x1, ch) * fy * fx,
                );
            }
        }
    }
    out
}

fn roi_align_check(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (h, w, c) = (rng.random_range(1..=32), rng.random_range(1..=32), rng.random_range(1..=4));
        let data = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let map = Tensor::new(vec![h, w, c], data).map_err(|e| e.to_string())?;
        let (x0, y0) = (rng.random_range(0.0..w as f64 - 0.05), rng.random_range(0.0..h as f64 - 0.05));
        let b = RoiBox { x0, y0, x1: rng.random_range(x0 + 0.05..=w as f64), y1: rng.random_range(y0 + 0.05..=h as f64) };
        let grid = (rng.random_range(1..=4), rng.random_range(1..=4));
        let got = roi_align(&map, b, grid).map_err(|e| e.to_string())?;
        for (a, e) in got.data().iter().zip(roi_oracle(&map, b, grid)) {
            worst = worst.max((a - e).abs());
        }
    }
    if worst <= 1e-6 {
        Ok(format!("200 boxes, max deviation {worst:.2e}"))
    } else {
        Err(format!("RoI-align deviates by {worst:.2e}"))
    }
}

fn gradient_check(seed: u64) -> Result<String, String> {
    let image = &synth_corpus(seed, 1, 112)[0];
    let err = (|| {
        let f0 = encode(image, &EncoderSpec::synthetic(4, seed), Origin::Overview)?.data;
        let pyramid = build_image_pyramid(image, 14, 3)?;
        let vdim = VdimParams::init_with(seed, 8, 3);
        mlr_gradient_check(&f0, &pyramid, &vdim, &DownsamplerParams::init(4), 1e-4)
    })()
    .map_err(|e| e.to_string())?;
    if err < 1e-4 {
        Ok(format!("max relative error {err:.2e}"))
    } else {
        Err(format!("gradient relative error {err:.2e}"))
    }
}

pub fn run(seed: u64) -> ExitCode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks: [(&str, Result<String, String>); 3] = [
        ("grid-selection", grid_selection(&mut rng)),
        ("roi-align", roi_align_check(&mut rng)),
        ("gradient", gradient_check(seed)),
    ];
    let mut failed = false;
    for (name, r) in checks {
        match r {
            Ok(msg) => println!("{name}: ok ({msg})"),
            Err(e) => {
                failed = true;
                println!("{name}: FAILED ({e})");
            }
        }
    }
    if failed {
        ExitCode::from(4)
    } else {
        ExitCode::SUCCESS
    }
}
