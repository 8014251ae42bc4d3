//! File formats: graph bundles, the synthetic benchmark generator and CSV
//! reports.

mod bundle;
mod reports;
mod synth;

pub use bundle::{load_bundle, save_bundle, BundleMeta};
pub use reports::{
    fmt_num, read_scores_csv, write_breakdown_csv, write_energy_csv, write_eval_csv, write_loss_csv, write_profile_csv,
    write_scores_csv, ScoreRow, TrialMetrics,
};
pub use synth::{generate_synthetic, SynthConfig, SynthNetwork};
