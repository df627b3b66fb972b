mod adam;
mod dense;
#[cfg(test)]
pub(crate) mod gradcheck;
mod head;

pub use adam::{Adam, AdamConfig};
pub use dense::{ensure_finite, sigmoid, Activation, Dense, DenseNet};
pub use head::{gumbel_softmax, logsumexp, softmax, HeadCache, OutputHead, DEFAULT_TEMPERATURE};
