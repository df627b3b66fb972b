//! Mixed-type encoding: Gaussian-mixture fitting, mode-specific
//! normalization, long-tail compression and the inverse decode.

mod codec;
mod encoder;
mod layout;
mod long_tail;
mod vgm;

pub use codec::{
    CategoricalCodec, Cell, CodecConfig, ColumnCodec, ModeSlot, Normalizer, NumericCodec,
};
pub(crate) use encoder::{argmax, hard_index};
pub use encoder::{TableTransformer, CODEC_BUNDLE_VERSION};
pub use layout::{EncodingLayout, Segment, SegmentKind};
pub use long_tail::{log_compress, log_expand, LongTailParams};
pub use vgm::{fit_vgm, GaussianMixtureModel, Mode, ModeWeighting, VgmConfig};
