//! Training-loop behavior: grid draws, the loss of an untrained model, and
//! progress on a small synthetic network.

mod common;

use egodiff::ego::{sample_ego, EgoConfig};
use egodiff::io::{generate_synthetic, SynthConfig};
use egodiff::model::{load_checkpoint, save_checkpoint, ModelConfig, ScoreModel};
use egodiff::rng::stream;
use egodiff::sde::VpSde;
use egodiff::train::{draw_hyperparameters, dsm_step, standardize_features, train, Hyperparameters, TrainConfig};
use rand::Rng as _;

#[test]
fn grid_draws_are_uniform() {
    let cfg = TrainConfig::default();
    let draws = 10_000;
    let mut counts = [[0usize; 3]; 3];
    for trial in 0..draws {
        let hp = draw_hyperparameters(&cfg, trial).unwrap();
        counts[0][cfg.lr_grid.iter().position(|v| *v == hp.lr).unwrap()] += 1;
        counts[1][cfg.hidden_dim_grid.iter().position(|v| *v == hp.hidden_dim).unwrap()] += 1;
        counts[2][cfg.alpha_grid.iter().position(|v| *v == hp.alpha).unwrap()] += 1;
    }
    // chi-square with 2 degrees of freedom; 13.8 is the 0.999 quantile
    let expected = draws as f64 / 3.0;
    for grid in counts {
        let chi2: f64 = grid.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 13.8, "{grid:?}");
    }
    assert_eq!(
        draw_hyperparameters(&cfg, 7).unwrap(),
        draw_hyperparameters(&cfg, 7).unwrap()
    );
}

#[test]
fn untrained_zero_network_has_unit_loss() {
    let mut rng = stream(3, &[]);
    let net = common::random_network(60, 4, 0.1, false, &mut rng);
    let mut model = ScoreModel::init(ModelConfig::default(), 4, VpSde::default(), &mut rng).unwrap();
    for p in model.theta.iter_mut().chain(model.phi.iter_mut()) {
        p.value.fill(0.0);
    }
    let ego = EgoConfig::default();
    let (mut lx, mut la) = (0.0, 0.0);
    let batches = 200;
    for b in 0..batches {
        let mut rng = stream(4, &[b]);
        let egos: Vec<_> = (0..8)
            .map(|_| {
                let v = rng.random_range(0..60);
                sample_ego(&net, v, &ego, &mut rng).unwrap()
            })
            .collect();
        let out = dsm_step(&model, &egos, &mut rng).unwrap();
        lx += out.loss_x;
        la += out.loss_a;
    }
    let (lx, la) = (lx / batches as f64, la / batches as f64);
    assert!((lx - 1.0).abs() < 0.05, "loss_x {lx}");
    assert!((la - 1.0).abs() < 0.05, "loss_a {la}");
}

fn small_network(seed: u64) -> egodiff::graph::SparseNetwork {
    let syn = generate_synthetic(&SynthConfig {
        num_nodes: 200,
        clique_size: 5,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    standardize_features(&syn.net).unwrap().0
}

#[test]
fn training_reduces_the_loss() {
    let net = small_network(1);
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: Some(32),
        ..TrainConfig::default()
    };
    let hp = Hyperparameters {
        lr: 0.01,
        hidden_dim: 16,
        alpha: 0.5,
    };
    let out = train(&net, &cfg, &hp, 1).unwrap();
    assert_eq!(out.curve.len(), 30);
    let first = out.curve[0].combined();
    let last = out.curve[29].combined();
    assert!(last < 0.9 * first, "{first} -> {last}");
}

#[test]
fn training_is_reproducible_and_checkpoints_round_trip() {
    let net = small_network(2);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: Some(16),
        ..TrainConfig::default()
    };
    let hp = Hyperparameters {
        lr: 0.05,
        hidden_dim: 8,
        alpha: 0.5,
    };
    let a = train(&net, &cfg, &hp, 5).unwrap();
    let b = train(&net, &cfg, &hp, 5).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.model, b.model);
    assert_ne!(train(&net, &cfg, &hp, 6).unwrap().model, a.model);

    let tmp = tempfile::tempdir().unwrap();
    save_checkpoint(&a.model, tmp.path()).unwrap();
    assert_eq!(load_checkpoint(tmp.path()).unwrap(), a.model);
}
