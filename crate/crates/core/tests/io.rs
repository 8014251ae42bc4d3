//! Bundles and reports survive a write/read cycle; the synthetic generator
//! produces the advertised structure.

mod common;

use egodiff::io::{generate_synthetic, load_bundle, read_scores_csv, save_bundle, write_scores_csv, SynthConfig};
use egodiff::rng::stream;
use egodiff::scorer::ScoreReport;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn bundles_round_trip(seed in any::<u64>(), n in 1usize..30, f in 1usize..5, p in 0.0f64..0.5, labeled in any::<bool>()) {
        let net = common::random_network(n, f, p, labeled, &mut stream(seed, &[]));
        let tmp = tempfile::tempdir().unwrap();
        save_bundle(&net, "random", tmp.path()).unwrap();
        let (meta, back) = load_bundle(tmp.path()).unwrap();
        prop_assert_eq!(meta.num_nodes, n);
        prop_assert_eq!(meta.num_features, f);
        prop_assert_eq!(back, net);
    }

    #[test]
    fn score_files_round_trip(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = stream(seed, &[]);
        let net = common::random_network(n, 1, 0.0, true, &mut rng);
        let scores: Vec<f64> = net.features().column(0).iter().map(|v| v.abs() / 3.0).collect();
        let report = ScoreReport { nodes: (0..n).collect(), scores: scores.clone(), records: vec![] };
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("scores.csv");
        write_scores_csv(&path, &report, net.labels()).unwrap();
        let rows = read_scores_csv(&path).unwrap();
        prop_assert_eq!(rows.len(), n);
        for r in &rows {
            prop_assert_eq!(r.score, scores[r.node]);
            prop_assert_eq!(r.label, Some(net.labels().unwrap()[r.node]));
        }
        prop_assert!(rows.windows(2).all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].node < w[1].node)));
    }
}

#[test]
fn synthetic_edge_count_matches_the_block_model() {
    let cfg = SynthConfig {
        structural_fraction: 0.0,
        ..SynthConfig::default()
    };
    let n = cfg.num_nodes as f64;
    let per_block = n / cfg.blocks as f64;
    let inner = cfg.blocks as f64 * per_block * (per_block - 1.0) / 2.0;
    let outer = n * (n - 1.0) / 2.0 - inner;
    let mean = inner * cfg.p_in + outer * cfg.p_out;
    let var = inner * cfg.p_in * (1.0 - cfg.p_in) + outer * cfg.p_out * (1.0 - cfg.p_out);
    for seed in 0..5 {
        let syn = generate_synthetic(&SynthConfig { seed, ..cfg.clone() }).unwrap();
        let edges = syn.net.edges().len() as f64;
        assert!(
            (edges - mean).abs() < 3.0 * var.sqrt(),
            "seed {seed}: {edges} vs {mean}"
        );
    }
}

#[test]
fn planted_outliers_are_labeled() {
    let cfg = SynthConfig {
        clique_size: 13,
        ..SynthConfig::default()
    };
    let syn = generate_synthetic(&cfg).unwrap();
    let labels = syn.net.labels().unwrap();
    assert_eq!(syn.contextual.len(), 13);
    assert_eq!(syn.cliques, vec![syn.cliques[0].clone()]);
    assert_eq!(labels.iter().filter(|l| **l).count(), 26);
    let dev = syn.deviation_norms();
    let normal_max = (0..500).filter(|v| !labels[*v]).map(|v| dev[v]).fold(0.0, f64::max);
    assert!(syn.contextual.iter().all(|&v| dev[v] > normal_max));
}
