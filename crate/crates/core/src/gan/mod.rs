//! Generator, discriminator and auxiliary classifier: losses, training and
//! synthesis.

mod config;
mod features;
mod losses;
mod model;

pub use config::{FeatureLayer, TrainConfig};
pub use features::ClassifierFeatures;
pub use losses::{
    adv_losses, cross_entropy, generator_adv_loss, info_loss, info_loss_grad, softplus, AdvLosses,
    FeatureStats,
};
pub use model::{EpochRecord, FixedCondition, History, Synthesizer, MODEL_BUNDLE_VERSION};
