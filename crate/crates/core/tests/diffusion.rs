//! The closed-form transition kernel against Monte-Carlo simulation of the
//! forward SDE.

mod common;

use egodiff::rng::stream;
use egodiff::sde::VpSde;
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn euler_maruyama_paths_match_closed_form_moments() {
    let sde = VpSde::default();
    let (paths, steps, x0) = (10_000, 1000, 2.0);
    let dt = sde.t_max / steps as f64;
    let checkpoints = [250, 500, 750, 1000];
    let mut snapshots = vec![Vec::with_capacity(paths); checkpoints.len()];
    let mut rng = stream(11, &[]);
    for _ in 0..paths {
        let mut x = x0;
        for k in 0..steps {
            let t = k as f64 * dt;
            let beta = sde.beta(t).unwrap();
            let z: f64 = rng.sample(StandardNormal);
            x += -0.5 * beta * x * dt + (beta * dt).sqrt() * z;
            if let Some(c) = checkpoints.iter().position(|&s| s == k + 1) {
                snapshots[c].push(x);
            }
        }
    }
    for (c, &s) in checkpoints.iter().enumerate() {
        let t = s as f64 * dt;
        let (m, sigma) = sde.moments(t);
        let (mean, std) = mean_std(&snapshots[c]);
        assert!((mean / (m * x0) - 1.0).abs() < 0.02, "t={t}: mean {mean} vs {}", m * x0);
        assert!((std / sigma - 1.0).abs() < 0.02, "t={t}: std {std} vs {sigma}");
    }
}

#[test]
fn one_shot_perturbation_has_kernel_moments() {
    let sde = VpSde::default();
    let x0 = Array2::from_elem((100, 100), 1.5);
    let mask = vec![true; 100];
    for (i, t) in [0.2, 0.5, 0.9].into_iter().enumerate() {
        let p = sde
            .perturb_features(&x0, &mask, t, &mut stream(5, &[i as u64]))
            .unwrap();
        let (m, sigma) = sde.moments(t);
        let v: Vec<f64> = p.noisy.iter().copied().collect();
        let (mean, std) = mean_std(&v);
        assert!((mean - m * 1.5).abs() < 4.0 * sigma / 100.0);
        assert!((std / sigma - 1.0).abs() < 0.03);
    }
}

#[test]
fn adjacency_perturbation_is_symmetric_with_kernel_moments() {
    let sde = VpSde::default();
    let n = 150;
    let a0 = common::random_adjacency(n, 0.3, &mut stream(6, &[]));
    let t = 0.6;
    let p = sde
        .perturb_adjacency(&a0, &vec![true; n], t, &mut stream(7, &[]))
        .unwrap();
    let (m, sigma) = sde.moments(t);
    let mut resid = Vec::new();
    for i in 0..n {
        assert_eq!(p.noisy[[i, i]], 0.0);
        for j in (i + 1)..n {
            assert_eq!(p.noisy[[i, j]], p.noisy[[j, i]]);
            resid.push((p.noisy[[i, j]] - m * a0[[i, j]]) / sigma);
        }
    }
    let (mean, std) = mean_std(&resid);
    let se = (resid.len() as f64).sqrt().recip();
    assert!(mean.abs() < 4.0 * se, "mean {mean}");
    assert!((std - 1.0).abs() < 4.0 * se, "std {std}");
}

#[test]
fn snr_reference_values() {
    let sde = VpSde::default();
    let snr = |t: f64| sde.snr(t).unwrap();
    assert!((snr(0.2) - 25.8).abs() < 0.1);
    assert!((snr(0.8) - 2.25).abs() < 0.02);
    let taus = [0.2, 0.4, 0.6, 0.8];
    assert!(taus.windows(2).all(|w| snr(w[0]) > snr(w[1])));
}
