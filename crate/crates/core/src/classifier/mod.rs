//! Random forest over feature datasets, its file format, and scan segmentation.

mod tree;

pub use tree::{train_tree, train_tree_on, DecisionTree, Node, TreeParams};

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{class_label, Dataset, Extractor, FeatureConfig, ATTRIBUTE_NAMES, FEATURE_CLASSES};
use crate::imaging::{apply_fat_window, CtScan, Label, LabelMask};
use crate::registration::Point;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Attributes sampled per split; 0 means `floor(log2(M)) + 1`.
    pub k: usize,
    pub seed: u64,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 10,
            k: 0,
            seed: 1,
            min_leaf: 1,
        }
    }
}

impl ForestParams {
    pub fn resolved_k(&self, attributes: usize) -> usize {
        if self.k == 0 {
            attributes.max(1).ilog2() as usize + 1
        } else {
            self.k
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<String>,
    pub classes: Vec<String>,
}

impl Schema {
    pub fn of(d: &Dataset) -> Self {
        Self {
            attributes: d.attributes.clone(),
            classes: d.classes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub forest: ForestParams,
    /// Feature extraction settings of the training data, when it came from scans.
    pub features: Option<FeatureConfig>,
}

/// Field order here is the on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub schema: Schema,
    pub params: ModelParams,
    /// Registration target of the training scans.
    pub target_center: Option<Point>,
    pub trees: Vec<DecisionTree>,
}

/// Per-tree generator: stream `i` of the ChaCha generator seeded with `seed`.
fn tree_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Bagged random trees. Each tree draws its bootstrap and attribute samples
/// from its own generator, so the result does not depend on scheduling.
pub fn train_forest(data: &Dataset, params: &ForestParams) -> Result<Forest> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    data.validate()?;
    let tp = TreeParams {
        k: params.resolved_k(data.attributes.len()),
        min_leaf: params.min_leaf,
    };
    let n = data.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(params.seed, i);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            train_tree_on(data, &sample, tp, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        format_version: MODEL_FORMAT_VERSION,
        schema: Schema::of(data),
        params: ModelParams {
            forest: *params,
            features: data.provenance.feature_config,
        },
        target_center: data.provenance.target_center,
        trees,
    })
}

impl Forest {
    /// Averaged class distribution and its argmax (lowest index on ties).
    pub fn predict(&self, values: &[f64]) -> Result<(usize, Vec<f64>)> {
        if values.len() != self.schema.attributes.len() {
            return Err(Error::SchemaMismatch(format!(
                "vector has {} values, model expects {}",
                values.len(),
                self.schema.attributes.len()
            )));
        }
        let mut dist = vec![0.0; self.schema.classes.len()];
        for t in &self.trees {
            for (d, p) in dist.iter_mut().zip(t.leaf_distribution(values)) {
                *d += p;
            }
        }
        let n = self.trees.len() as f64;
        dist.iter_mut().for_each(|d| *d /= n);
        let mut best = 0;
        for (i, &p) in dist.iter().enumerate() {
            if p > dist[best] {
                best = i;
            }
        }
        Ok((best, dist))
    }

    pub fn predict_class(&self, values: &[f64]) -> Result<usize> {
        self.predict(values).map(|(c, _)| c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::CorruptModel("missing format_version".into()))?;
        if version != MODEL_FORMAT_VERSION as u64 {
            return Err(Error::VersionMismatch {
                expected: MODEL_FORMAT_VERSION,
                found: u32::try_from(version).unwrap_or(u32::MAX),
            });
        }
        let forest: Forest = serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
        forest.validate()?;
        Ok(forest)
    }

    fn validate(&self) -> Result<()> {
        if self.schema.classes.is_empty() {
            return Err(Error::CorruptModel("schema has no classes".into()));
        }
        if self.trees.len() != self.params.forest.n_trees || self.trees.is_empty() {
            return Err(Error::CorruptModel(format!(
                "{} trees stored, {} declared",
                self.trees.len(),
                self.params.forest.n_trees
            )));
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.validate(self.schema.attributes.len(), self.schema.classes.len())
                .map_err(|e| Error::CorruptModel(format!("tree {i}: {e}")))?;
        }
        Ok(())
    }
}

pub fn save_model(forest: &Forest, path: &Path) -> Result<()> {
    fs::write(path, forest.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Forest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Forest::from_json(&text)
}

/// Label every fat pixel of a registered scan. Pixels outside the fat window stay background.
pub fn segment_scan(scan: &CtScan, forest: &Forest) -> Result<Vec<LabelMask>> {
    let expected = forest.target_center.map(|p| (p.x, p.y));
    let found = scan.registration.map(|t| (t.target_center.x, t.target_center.y));
    if expected != found {
        return Err(Error::RegistrationMismatch { expected, found });
    }
    if forest.schema.attributes != ATTRIBUTE_NAMES || forest.schema.classes != FEATURE_CLASSES {
        return Err(Error::SchemaMismatch("model was not trained on pixel features".into()));
    }
    let config = FeatureConfig {
        sample_stride: 1,
        ..forest
            .params
            .features
            .ok_or_else(|| Error::SchemaMismatch("model carries no feature configuration".into()))?
    };
    let extractor = Extractor::new(config)?;
    scan.slices()
        .iter()
        .map(|slice| {
            let fat = apply_fat_window(slice, config.fat_window);
            let rows = extractor.slice_rows(&fat, slice.z_index(), |_, _| Some(()))?;
            let labels: Vec<Label> = rows
                .par_iter()
                .map(|(_, _, values, _)| class_label(forest.predict_class(values)?))
                .collect::<Result<_>>()?;
            let mut mask = LabelMask::filled(slice.width(), slice.height(), Label::Background);
            for ((x, y, _, _), l) in rows.iter().zip(labels) {
                mask.set(*x, *y, l);
            }
            Ok(mask)
        })
        .collect()
}
