//! One function per subcommand. Each reads its inputs from the paths in the
//! configuration and writes its outputs plus the resolved configuration.
//!
//! Layout:
//!
//! ```text
//! {checkpoint}/trial_{k}/  manifest.json params.bin scaler.json loss.csv hyperparams.json
//! {out_dir}/trial_{k}/     scores.csv breakdown.csv
//! {out_dir}/               eval.csv solver_profile.csv energy_hist.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use egodiff::graph::SparseNetwork;
use egodiff::io::{
    generate_synthetic, load_bundle, read_scores_csv, save_bundle, write_breakdown_csv, write_energy_csv,
    write_eval_csv, write_loss_csv, write_profile_csv, write_scores_csv, TrialMetrics,
};
use egodiff::metrics::{evaluate, summarize, LabeledScores};
use egodiff::model::{load_checkpoint, save_checkpoint, ScoreModel};
use egodiff::rng;
use egodiff::scorer::{energy_histogram_data, score_all, solver_error_profile};
use egodiff::solver::SolverKind;
use egodiff::train::{draw_hyperparameters, standardize_features, train, trial_seed, FeatureScaler, Hyperparameters};
use rand::seq::index;

use crate::{CliError, RunConfig};

const SCALER_FILE: &str = "scaler.json";
const HYPERPARAMS_FILE: &str = "hyperparams.json";
const LOSS_FILE: &str = "loss.csv";
const SCORES_FILE: &str = "scores.csv";
const BREAKDOWN_FILE: &str = "breakdown.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const PROFILE_FILE: &str = "solver_profile.csv";
pub const ENERGY_FILE: &str = "energy_hist.csv";

// rng stream tag for picking analysis nodes
const PICK: u64 = 21;

pub fn trial_dir(root: &Path, trial: usize) -> PathBuf {
    root.join(format!("trial_{trial}"))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn data_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {msg}", path.display()))
}

/// Generates the synthetic benchmark network into `paths.bundle`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.synth
        .validate()
        .map_err(|e| CliError::Usage(format!("synth: {e}")))?;
    let syn = generate_synthetic(&cfg.synth)?;
    let dir = &cfg.paths.bundle;
    save_bundle(&syn.net, "synthetic", dir)?;
    cfg.write_next_to(dir)?;
    eprintln!(
        "synth: {} nodes, {} edges, {} contextual + {} structural outliers -> {}",
        syn.net.num_nodes(),
        syn.net.edges().len(),
        syn.contextual.len(),
        syn.cliques.iter().map(Vec::len).sum::<usize>(),
        dir.display()
    );
    Ok(())
}

/// Draws hyperparameters and trains one model per trial.
pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, raw) = load_bundle(&cfg.paths.bundle)?;
    let (net, scaler) = standardize_features(&raw).map_err(|e| data_err(&cfg.paths.bundle, e))?;
    if !scaler.constant_columns().is_empty() {
        eprintln!(
            "train: constant feature columns left unscaled: {:?}",
            scaler.constant_columns()
        );
    }
    let tc = cfg.train_config();
    create_dir(&cfg.paths.checkpoint)?;
    cfg.write_next_to(&cfg.paths.checkpoint)?;
    for trial in 0..cfg.train.trials {
        let hp = draw_hyperparameters(&tc, trial)?;
        let trained = train(&net, &tc, &hp, trial_seed(tc.seed, trial))?;
        let dir = trial_dir(&cfg.paths.checkpoint, trial);
        save_checkpoint(&trained.model, &dir)?;
        scaler.save(&dir.join(SCALER_FILE))?;
        write_loss_csv(&dir.join(LOSS_FILE), &trained.curve)?;
        let hp_path = dir.join(HYPERPARAMS_FILE);
        let json = serde_json::to_string_pretty(&hp).expect("hyperparameters serialize") + "\n";
        fs::write(&hp_path, json).map_err(|e| data_err(&hp_path, e))?;
        let last = trained.curve.last().map_or(f64::NAN, |l| l.combined());
        eprintln!(
            "train: trial {trial} lr={} hidden={} alpha={} final loss {last:.4}",
            hp.lr, hp.hidden_dim, hp.alpha
        );
    }
    Ok(())
}

/// A trained trial with the network rescaled the way it was trained.
struct Trial {
    model: ScoreModel,
    hp: Hyperparameters,
    net: SparseNetwork,
}

fn load_trial(cfg: &RunConfig, raw: &SparseNetwork, trial: usize) -> Result<Trial, CliError> {
    let dir = trial_dir(&cfg.paths.checkpoint, trial);
    let model = load_checkpoint(&dir)?;
    let scaler = FeatureScaler::load(&dir.join(SCALER_FILE))?;
    let hp_path = dir.join(HYPERPARAMS_FILE);
    let text = fs::read_to_string(&hp_path).map_err(|e| data_err(&hp_path, e))?;
    let hp: Hyperparameters = serde_json::from_str(&text).map_err(|e| data_err(&hp_path, e))?;
    let x = scaler
        .apply(raw.features())
        .map_err(|e| data_err(&dir.join(SCALER_FILE), e))?;
    let net = raw.with_features(x)?;
    if net.num_features() != model.num_features {
        return Err(data_err(
            &dir,
            format!(
                "checkpoint expects {} features, bundle has {}",
                model.num_features,
                net.num_features()
            ),
        ));
    }
    Ok(Trial { model, hp, net })
}

/// Scores every node with every trained trial.
pub fn cmd_score(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, raw) = load_bundle(&cfg.paths.bundle)?;
    create_dir(&cfg.paths.out_dir)?;
    cfg.write_next_to(&cfg.paths.out_dir)?;
    for trial in 0..cfg.train.trials {
        let t = load_trial(cfg, &raw, trial)?;
        let sc = cfg.scoring_config(t.hp.alpha, trial_seed(cfg.train.seed, trial));
        let report = score_all(&t.net, &t.model, &cfg.ego, &sc)?;
        let dir = trial_dir(&cfg.paths.out_dir, trial);
        create_dir(&dir)?;
        write_scores_csv(&dir.join(SCORES_FILE), &report, raw.labels())?;
        write_breakdown_csv(&dir.join(BREAKDOWN_FILE), &report)?;
        let flagged = report.flagged().count();
        if flagged > 0 {
            eprintln!(
                "score: trial {trial}: {flagged} reconstructions with zero energy or no edges (see breakdown.csv)"
            );
        }
        eprintln!("score: trial {trial} -> {}", dir.display());
    }
    Ok(())
}

/// Labels for `n` nodes: from the score file when it has them, else the bundle.
fn labels_for(cfg: &RunConfig, path: &Path, rows: &[egodiff::io::ScoreRow]) -> Result<Vec<bool>, CliError> {
    let n = rows.len();
    let mut seen = vec![false; n];
    for r in rows {
        if r.node >= n || seen[r.node] {
            return Err(data_err(path, format!("node ids must be a permutation of 0..{n}")));
        }
        seen[r.node] = true;
    }
    if rows.iter().all(|r| r.label.is_some()) && n > 0 {
        let mut labels = vec![false; n];
        for r in rows {
            labels[r.node] = r.label.expect("checked above");
        }
        return Ok(labels);
    }
    let (_, net) = load_bundle(&cfg.paths.bundle)?;
    let labels = net.labels().ok_or_else(|| {
        data_err(
            &cfg.paths.bundle,
            "no labels.tsv and the score file has no label column",
        )
    })?;
    if labels.len() != n {
        return Err(data_err(path, format!("{n} scores for {} labeled nodes", labels.len())));
    }
    Ok(labels.to_vec())
}

/// Computes ROC-AUC, AP and Recall@k for every trial plus mean/std/max.
pub fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let mut trials = Vec::with_capacity(cfg.train.trials);
    for trial in 0..cfg.train.trials {
        let path = trial_dir(&cfg.paths.out_dir, trial).join(SCORES_FILE);
        let rows = read_scores_csv(&path)?;
        let labels = labels_for(cfg, &path, &rows)?;
        let mut scores = vec![0.0; rows.len()];
        for r in &rows {
            scores[r.node] = r.score;
        }
        let ls = LabeledScores::new(scores, labels).map_err(|e| data_err(&path, e))?;
        let eval = evaluate(&ls).map_err(|e| data_err(&path, e))?;
        trials.push(TrialMetrics { trial, eval });
    }
    let out = cfg.paths.out_dir.join(EVAL_FILE);
    write_eval_csv(&out, &trials)?;
    cfg.write_next_to(&cfg.paths.out_dir)?;
    let (mean, std, max) = summarize(&trials.iter().map(|t| t.eval.roc_auc).collect::<Vec<_>>()).expect("trials >= 1");
    eprintln!(
        "eval: ROC-AUC {mean:.4} ± {std:.4} (max {max:.4}) over {} trials -> {}",
        trials.len(),
        out.display()
    );
    Ok(())
}

/// The nodes `solver-compare` and `energy-hist` look at.
pub fn analysis_nodes(n: usize, limit: Option<usize>, seed: u64) -> Vec<usize> {
    match limit {
        Some(k) if k < n => {
            let mut nodes = index::sample(&mut rng::stream(seed, &[PICK]), n, k).into_vec();
            nodes.sort_unstable();
            nodes
        }
        _ => (0..n).collect(),
    }
}

/// Mean reconstruction errors per solver and noise level, using trial 0.
pub fn cmd_solver_compare(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, raw) = load_bundle(&cfg.paths.bundle)?;
    let t = load_trial(cfg, &raw, 0)?;
    let seed = trial_seed(cfg.train.seed, 0);
    let nodes = analysis_nodes(t.net.num_nodes(), cfg.scoring.profile_nodes, seed);
    let rows = solver_error_profile(
        &t.net,
        &nodes,
        &t.model,
        &cfg.ego,
        &SolverKind::ALL,
        &cfg.scoring.profile_taus,
        &cfg.scoring.solver,
        seed,
    )?;
    create_dir(&cfg.paths.out_dir)?;
    let out = cfg.paths.out_dir.join(PROFILE_FILE);
    write_profile_csv(&out, &rows)?;
    cfg.write_next_to(&cfg.paths.out_dir)?;
    eprintln!("solver-compare: {} nodes -> {}", nodes.len(), out.display());
    Ok(())
}

/// Original vs reconstructed normalized energies, using trial 0.
pub fn cmd_energy_hist(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, raw) = load_bundle(&cfg.paths.bundle)?;
    let t = load_trial(cfg, &raw, 0)?;
    let seed = trial_seed(cfg.train.seed, 0);
    let nodes = analysis_nodes(t.net.num_nodes(), cfg.scoring.profile_nodes, seed);
    let sc = cfg.scoring_config(t.hp.alpha, seed);
    let records = energy_histogram_data(&t.net, &nodes, &t.model, &cfg.ego, &sc)?;
    create_dir(&cfg.paths.out_dir)?;
    let out = cfg.paths.out_dir.join(ENERGY_FILE);
    write_energy_csv(&out, &records)?;
    cfg.write_next_to(&cfg.paths.out_dir)?;
    eprintln!("energy-hist: {} records -> {}", records.len(), out.display());
    Ok(())
}
