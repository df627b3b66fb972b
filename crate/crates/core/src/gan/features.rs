//! Classifier inputs computed from encoded rows.
//!
//! Numeric columns contribute their decoded value, min-max scaled with the
//! training bounds, plus one indicator per special or missing slot.
//! Categorical columns contribute their one-hot. The target column is left
//! out and becomes the label. The map is differentiable in the soft
//! generator output except through the choice of mode, which is hardened.

use ndarray::{s, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::transform::{argmax, ColumnCodec, ModeSlot, NumericCodec, TableTransformer};

#[derive(Debug, Clone)]
enum Part {
    Numeric {
        codec: NumericCodec,
        alpha: usize,
        modes: Option<(usize, usize)>,
        out: usize,
        /// `(slot, output index)` for special and missing slots.
        indicators: Vec<(usize, usize)>,
    },
    OneHot {
        offset: usize,
        width: usize,
        out: usize,
    },
}

#[derive(Debug, Clone)]
pub struct ClassifierFeatures {
    parts: Vec<Part>,
    width: usize,
    target_offset: usize,
    n_classes: usize,
}

impl ClassifierFeatures {
    pub fn new(transformer: &TableTransformer, target: &str) -> Result<Self> {
        let layout = transformer.layout();
        let target_pos = transformer
            .column_position(target)
            .ok_or_else(|| Error::InvalidTarget(format!("`{target}` is not an encoded column")))?;
        let ColumnCodec::Categorical(tc) = &transformer.codecs()[target_pos] else {
            return Err(Error::InvalidTarget(format!(
                "`{target}` must be categorical to train a classifier"
            )));
        };
        let target_seg = layout.one_hot_of(target_pos).expect("class segment");
        let mut parts = Vec::new();
        let mut out = 0;
        for (pos, codec) in transformer.codecs().iter().enumerate() {
            if pos == target_pos {
                continue;
            }
            match codec {
                ColumnCodec::Numeric(c) => {
                    let alpha = layout.alpha_of(pos).expect("α segment").offset;
                    let modes = layout.one_hot_of(pos).map(|s| (s.offset, s.width));
                    let value_out = out;
                    out += 1;
                    let mut indicators = Vec::new();
                    for (slot, kind) in c.slots.iter().enumerate() {
                        if !matches!(kind, ModeSlot::Continuous { .. }) {
                            indicators.push((slot, out));
                            out += 1;
                        }
                    }
                    parts.push(Part::Numeric {
                        codec: c.clone(),
                        alpha,
                        modes,
                        out: value_out,
                        indicators,
                    });
                }
                ColumnCodec::Categorical(c) => {
                    let seg = layout.one_hot_of(pos).expect("class segment");
                    parts.push(Part::OneHot {
                        offset: seg.offset,
                        width: c.width(),
                        out,
                    });
                    out += c.width();
                }
            }
        }
        if out == 0 {
            return Err(Error::InvalidTarget(
                "the classifier needs at least one non-target column".into(),
            ));
        }
        Ok(ClassifierFeatures {
            parts,
            width: out,
            target_offset: target_seg.offset,
            n_classes: tc.width(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Argmax of the target segment per row.
    pub fn labels(&self, encoded: &Array2<f64>) -> Vec<usize> {
        encoded
            .outer_iter()
            .map(|row| {
                argmax(row.slice(s![self.target_offset..self.target_offset + self.n_classes]))
            })
            .collect()
    }

    fn scale(codec: &NumericCodec) -> (f64, f64) {
        let (lo, hi) = codec.bounds;
        (lo, if hi > lo { hi - lo } else { 1.0 })
    }

    fn slot(modes: Option<(usize, usize)>, row: ArrayView1<f64>) -> Option<usize> {
        modes.map(|(o, w)| argmax(row.slice(s![o..o + w])))
    }

    pub fn forward(&self, encoded: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((encoded.nrows(), self.width));
        for (r, row) in encoded.outer_iter().enumerate() {
            for part in &self.parts {
                match part {
                    Part::Numeric {
                        codec,
                        alpha,
                        modes,
                        out: o,
                        indicators,
                    } => {
                        let slot = Self::slot(*modes, row);
                        let value = codec.decode(row[*alpha], slot).ok().flatten();
                        let (lo, span) = Self::scale(codec);
                        out[[r, *o]] = value.map_or(0.0, |v| (v - lo) / span);
                        if let Some((offset, _)) = modes {
                            for &(slot, idx) in indicators {
                                out[[r, idx]] = row[offset + slot];
                            }
                        }
                    }
                    Part::OneHot {
                        offset,
                        width,
                        out: o,
                    } => {
                        for k in 0..*width {
                            out[[r, o + k]] = row[offset + k];
                        }
                    }
                }
            }
        }
        out
    }

    /// Pulls `dL/d features` back to `dL/d encoded`.
    pub fn backward(&self, encoded: &Array2<f64>, upstream: &Array2<f64>) -> Result<Array2<f64>> {
        if upstream.dim() != (encoded.nrows(), self.width) {
            return Err(Error::Shape("classifier feature gradient shape".into()));
        }
        let mut grad = Array2::zeros(encoded.dim());
        for (r, row) in encoded.outer_iter().enumerate() {
            for part in &self.parts {
                match part {
                    Part::Numeric {
                        codec,
                        alpha,
                        modes,
                        out: o,
                        indicators,
                    } => {
                        let slot = Self::slot(*modes, row);
                        let (_, span) = Self::scale(codec);
                        let d = codec.alpha_derivative(slot, row[*alpha]);
                        // decode clamps α, so the slope vanishes outside [-1, 1]
                        let inside = row[*alpha].abs() <= 1.0;
                        if inside {
                            grad[[r, *alpha]] += upstream[[r, *o]] * d / span;
                        }
                        if let Some((offset, _)) = modes {
                            for &(slot, idx) in indicators {
                                grad[[r, offset + slot]] += upstream[[r, idx]];
                            }
                        }
                    }
                    Part::OneHot {
                        offset,
                        width,
                        out: o,
                    } => {
                        for k in 0..*width {
                            grad[[r, offset + k]] += upstream[[r, o + k]];
                        }
                    }
                }
            }
        }
        Ok(grad)
    }
}
