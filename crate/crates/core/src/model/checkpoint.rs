//! Checkpoint directories: `manifest.json` + `params.bin`.
//!
//! The manifest lists every parameter (`theta.*` then `phi.*`) with its shape,
//! and records the model config and diffusion schedule. `params.bin` holds
//! the values as little-endian `f64`, row-major, in manifest order.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{init_phi, init_theta, ModelConfig, ParamStore, ScoreModel};
use crate::error::{Error, Result};
use crate::rng;
use crate::sde::VpSde;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub model: ModelConfig,
    pub sde: VpSde,
    pub num_features: usize,
    pub params: Vec<ManifestEntry>,
}

fn entries<'a>(prefix: &str, store: &'a ParamStore) -> impl Iterator<Item = ManifestEntry> + 'a {
    let prefix = prefix.to_owned();
    store.iter().map(move |p| ManifestEntry {
        name: format!("{prefix}.{}", p.name),
        shape: [p.value.nrows(), p.value.ncols()],
        dtype: "f64".into(),
    })
}

impl Manifest {
    pub fn of(model: &ScoreModel) -> Self {
        Self {
            model: model.config,
            sde: model.sde,
            num_features: model.num_features,
            params: entries("theta", &model.theta)
                .chain(entries("phi", &model.phi))
                .collect(),
        }
    }
}

pub fn save_checkpoint(model: &ScoreModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest::of(model);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))?;

    let mut bytes = Vec::with_capacity(8 * (model.theta.num_values() + model.phi.num_values()));
    for v in model.theta.flatten().into_iter().chain(model.phi.flatten()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let ppath = dir.join(PARAMS_FILE);
    fs::write(&ppath, bytes).map_err(|e| Error::io(&ppath, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<ScoreModel> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: mpath.clone(),
        source,
    })?;
    let bad = |msg: String| Error::Data {
        path: mpath.clone(),
        msg,
    };
    manifest.model.validate().map_err(|e| bad(e.to_string()))?;
    manifest.sde.validate().map_err(|e| bad(e.to_string()))?;

    // The layout is fully determined by the config; the manifest must agree.
    let mut scratch = rng::stream(0, &[]);
    let mut theta = init_theta(&manifest.model, manifest.num_features, &mut scratch);
    let mut phi = init_phi(&manifest.model, manifest.num_features, &mut scratch);
    let expected: Vec<ManifestEntry> = entries("theta", &theta).chain(entries("phi", &phi)).collect();
    if expected.len() != manifest.params.len() {
        return Err(bad(format!(
            "expected {} parameters, manifest lists {}",
            expected.len(),
            manifest.params.len()
        )));
    }
    for (want, got) in expected.iter().zip(&manifest.params) {
        if want != got {
            return Err(bad(format!("parameter {} does not match layout ({want:?})", got.name)));
        }
    }

    let ppath = dir.join(PARAMS_FILE);
    let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let total = theta.num_values() + phi.num_values();
    if bytes.len() != 8 * total {
        return Err(Error::Data {
            path: ppath,
            msg: format!("expected {} bytes, found {}", 8 * total, bytes.len()),
        });
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    for store in [&mut theta, &mut phi] {
        for p in store.iter_mut() {
            let dim = p.value.dim();
            let data: Vec<f64> = values.by_ref().take(dim.0 * dim.1).collect();
            p.value = Array2::from_shape_vec(dim, data).expect("length checked above");
        }
    }
    let model = ScoreModel {
        config: manifest.model,
        num_features: manifest.num_features,
        sde: manifest.sde,
        theta,
        phi,
    };
    model.theta.check_finite()?;
    model.phi.check_finite()?;
    Ok(model)
}
