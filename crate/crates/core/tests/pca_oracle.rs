use hiwin_core::numerics::{principal_components, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi eigensolver for a dense symmetric matrix. Returns
/// eigenvalues and column eigenvectors, unsorted.
fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

#[test]
fn power_iteration_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (h, w, c) = (8, 8, 16);
    // Anisotropic scales keep the leading eigenvalues well separated.
    let scales: Vec<f64> = (0..c).map(|k| 3.0 / (1.0 + k as f64)).collect();
    let t = Tensor::from_hwc_fn(h, w, c, |_, _, ch| rng.random_range(-1.0..1.0) * scales[ch]);

    let n = (h * w) as f64;
    let mean: Vec<f64> = (0..c).map(|ch| t.data().iter().skip(ch).step_by(c).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; c]; c];
    for px in t.data().chunks_exact(c) {
        for a in 0..c {
            for b in 0..c {
                cov[a][b] += (px[a] - mean[a]) * (px[b] - mean[b]) / n;
            }
        }
    }
    let (vals, vecs) = jacobi(cov);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());

    let pc = principal_components(&t, 3).unwrap();
    for (k, &idx) in order.iter().take(3).enumerate() {
        let rel = (pc.variances[k] - vals[idx]).abs() / vals[idx];
        assert!(rel < 1e-6, "eigenvalue {k}: {} vs {}", pc.variances[k], vals[idx]);
        let dot: f64 = (0..c).map(|i| pc.components[k][i] * vecs[i][idx]).sum();
        assert!(dot.abs() > 1.0 - 1e-6, "component {k} alignment {dot}");
    }
}
