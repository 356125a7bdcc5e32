use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::ForestParams;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::imaging::FatWindow;
use crate::registration::{Point, RegistrationParams};

use super::phantom::PhantomParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split_fraction: f64,
    pub folds: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split_fraction: 0.66,
            folds: 10,
            seed: 1,
            stratified: false,
        }
    }
}

/// Settings shared by every subcommand, read from a TOML file.
///
/// The top-level `fat_window` and `target_center` are authoritative: they are
/// copied into the registration, feature and phantom sections on use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fat_window: FatWindow,
    /// Slices are resampled to this isotropic spacing before registration.
    pub standard_spacing_mm: f64,
    pub atlas: Option<PathBuf>,
    pub target_center: Option<Point>,
    pub registration: RegistrationParams,
    pub features: FeatureConfig,
    pub forest: ForestParams,
    pub evaluation: EvalConfig,
    pub phantom: PhantomParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fat_window: FatWindow::default(),
            standard_spacing_mm: 0.7,
            atlas: None,
            target_center: None,
            registration: RegistrationParams::default(),
            features: FeatureConfig::default(),
            forest: ForestParams::default(),
            evaluation: EvalConfig::default(),
            phantom: PhantomParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format {
            path: "<config>".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Format { reason, .. } => Error::Format {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn registration_params(&self) -> RegistrationParams {
        RegistrationParams {
            fat_window: self.fat_window,
            target_center: self.target_center,
            ..self.registration
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            fat_window: self.fat_window,
            ..self.features
        }
    }

    pub fn phantom_params(&self) -> PhantomParams {
        PhantomParams {
            target_center: self.target_center,
            ..self.phantom
        }
    }

    pub fn validate(&self) -> Result<()> {
        FatWindow::new(self.fat_window.lo, self.fat_window.hi)?;
        if !(self.standard_spacing_mm > 0.0 && self.standard_spacing_mm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "standard spacing must be positive, got {}",
                self.standard_spacing_mm
            )));
        }
        let reg = self.registration_params();
        reg.wmi.validate()?;
        if reg.search_stride == 0 {
            return Err(Error::InvalidParameter("search stride must be at least 1".into()));
        }
        if reg.confirm.gap_max == 0 || reg.confirm.rect_width == 0 || reg.confirm.rect_height == 0 {
            return Err(Error::InvalidParameter("confirmation rectangle and gap_max must be positive".into()));
        }
        self.feature_config().validate()?;
        if self.forest.n_trees == 0 || self.forest.min_leaf == 0 {
            return Err(Error::InvalidParameter("forest needs at least one tree and min_leaf >= 1".into()));
        }
        let e = &self.evaluation;
        if !(e.split_fraction > 0.0 && e.split_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!("split fraction {} is not in (0, 1)", e.split_fraction)));
        }
        if e.folds < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 folds, got {}", e.folds)));
        }
        self.phantom_params().validate()
    }
}
