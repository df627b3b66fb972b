use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{AdamConfig, DEFAULT_TEMPERATURE};
use crate::transform::CodecConfig;

/// Which discriminator activations feed the information loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLayer {
    #[default]
    Penultimate,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub noise_dim: usize,
    pub seed: u64,
    pub classifier_on: bool,
    pub info_loss_on: bool,
    pub vgm_on: bool,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
    pub generator_opt: AdamConfig,
    pub discriminator_opt: AdamConfig,
    pub classifier_opt: AdamConfig,
    pub lambda_info: f64,
    pub lambda_class: f64,
    pub lambda_cond: f64,
    pub temperature: f64,
    pub info_layer: FeatureLayer,
    /// Codec settings; `use_vgm` is overridden by `vgm_on`.
    pub codec: CodecConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 500,
            noise_dim: 100,
            seed: 0,
            classifier_on: true,
            info_loss_on: true,
            vgm_on: true,
            generator_hidden: vec![256; 4],
            discriminator_hidden: vec![256; 2],
            classifier_hidden: vec![256; 6],
            generator_opt: AdamConfig::default(),
            discriminator_opt: AdamConfig::default(),
            classifier_opt: AdamConfig::default(),
            lambda_info: 1.0,
            lambda_class: 1.0,
            lambda_cond: 1.0,
            temperature: DEFAULT_TEMPERATURE,
            info_layer: FeatureLayer::Penultimate,
            codec: CodecConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.noise_dim == 0 {
            return bad("noise dimension must be at least 1");
        }
        if self.discriminator_hidden.is_empty() && self.info_layer == FeatureLayer::Penultimate {
            return bad("the penultimate feature layer needs a hidden discriminator layer");
        }
        for (name, v) in [
            ("lambda_info", self.lambda_info),
            ("lambda_class", self.lambda_class),
            ("lambda_cond", self.lambda_cond),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be non-negative"
                )));
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        Ok(())
    }

    pub(crate) fn codec_config(&self) -> CodecConfig {
        CodecConfig {
            use_vgm: self.vgm_on,
            ..self.codec
        }
    }
}
