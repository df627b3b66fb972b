use serde::{Deserialize, Serialize};

use super::long_tail::LongTailParams;
use super::vgm::{fit_vgm, GaussianMixtureModel, ModeWeighting, VgmConfig};
use crate::data::ColumnKind;
use crate::error::{Error, Result};

/// Fitting options shared by all column codecs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub vgm: VgmConfig,
    pub weighting: ModeWeighting,
    /// `false` swaps mode-specific normalization for plain min-max scaling.
    pub use_vgm: bool,
    pub long_tail_epsilon: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            vgm: VgmConfig::default(),
            weighting: ModeWeighting::Weighted,
            use_vgm: true,
            long_tail_epsilon: 1.0,
        }
    }
}

/// How the continuous part of a numeric column is scaled into α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Normalizer {
    /// α = (x − μ_k) / 4σ_k against the selected mode k.
    Vgm {
        gmm: GaussianMixtureModel,
        weighting: ModeWeighting,
    },
    /// α = 2 (x − min) / (max − min) − 1.
    MinMax { min: f64, max: f64 },
}

/// One position of a numeric column's mode one-hot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModeSlot {
    /// A continuous mode of the normalizer.
    Continuous {
        index: usize,
    },
    /// An exact special value of a mixed column.
    Value {
        value: f64,
    },
    Missing,
}

/// Codec for a continuous or mixed column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericCodec {
    pub name: String,
    pub mixed: bool,
    pub normalizer: Normalizer,
    pub long_tail: Option<LongTailParams>,
    /// Mode one-hot positions: special values and continuous modes ordered by
    /// location, the missing mode last. Empty for a min-max continuous column.
    pub slots: Vec<ModeSlot>,
    /// Raw training minimum and maximum over present values.
    pub bounds: (f64, f64),
}

/// Codec for a categorical column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalCodec {
    pub name: String,
    pub classes: Vec<String>,
    /// Missing cells map to one extra class after `classes`.
    pub has_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "codec", rename_all = "snake_case")]
pub enum ColumnCodec {
    Numeric(NumericCodec),
    Categorical(CategoricalCodec),
}

/// A decoded cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Number(f64),
    Category(String),
}

impl ColumnCodec {
    pub fn name(&self) -> &str {
        match self {
            ColumnCodec::Numeric(c) => &c.name,
            ColumnCodec::Categorical(c) => &c.name,
        }
    }

    /// Width of the one-hot segment (modes or classes).
    pub fn one_hot_width(&self) -> usize {
        match self {
            ColumnCodec::Numeric(c) => c.slots.len(),
            ColumnCodec::Categorical(c) => c.width(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, ColumnCodec::Numeric(_))
    }
}

impl CategoricalCodec {
    pub fn fit(name: &str, tokens: &[Option<String>]) -> Self {
        let mut classes: Vec<String> = tokens.iter().flatten().cloned().collect();
        classes.sort();
        classes.dedup();
        CategoricalCodec {
            name: name.to_string(),
            classes,
            has_missing: tokens.iter().any(Option::is_none),
        }
    }

    pub fn width(&self) -> usize {
        self.classes.len() + usize::from(self.has_missing)
    }

    /// Index of the one-hot bit for a token.
    pub fn encode(&self, token: Option<&str>) -> Result<usize> {
        match token {
            Some(t) => self
                .classes
                .binary_search_by(|c| c.as_str().cmp(t))
                .map_err(|_| Error::UnseenCategory {
                    column: self.name.clone(),
                    token: t.to_string(),
                }),
            None if self.has_missing => Ok(self.classes.len()),
            None => Err(Error::UnseenCategory {
                column: self.name.clone(),
                token: "<missing>".into(),
            }),
        }
    }

    pub fn decode(&self, index: usize) -> Result<Cell> {
        if index < self.classes.len() {
            Ok(Cell::Category(self.classes[index].clone()))
        } else if self.has_missing && index == self.classes.len() {
            Ok(Cell::Missing)
        } else {
            Err(Error::Shape(format!(
                "class index {index} out of range for `{}`",
                self.name
            )))
        }
    }
}

impl NumericCodec {
    /// Fits a codec for a continuous or mixed column.
    pub fn fit(
        name: &str,
        kind: &ColumnKind,
        values: &[Option<f64>],
        config: &CodecConfig,
    ) -> Result<Self> {
        let (mixed, special, log_transform) = match kind {
            ColumnKind::Continuous { log_transform } => (false, Vec::new(), *log_transform),
            ColumnKind::Mixed {
                categorical_values,
                log_transform,
            } => (true, categorical_values.clone(), *log_transform),
            ColumnKind::Categorical => {
                return Err(Error::InvalidSchema(format!(
                    "`{name}` is categorical, not numeric"
                )))
            }
        };
        let has_missing = values.iter().any(Option::is_none);
        if has_missing && !mixed {
            return Err(Error::InvalidSchema(format!(
                "continuous column `{name}` has missing values"
            )));
        }
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        if present.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "column `{name}` has no values"
            )));
        }
        let bounds = present
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let continuous: Vec<f64> = present
            .iter()
            .copied()
            .filter(|v| !special.contains(v))
            .collect();

        let long_tail = if log_transform && !continuous.is_empty() {
            let min = continuous.iter().copied().fold(f64::INFINITY, f64::min);
            Some(LongTailParams::new(min, config.long_tail_epsilon)?)
        } else {
            None
        };
        let transformed: Vec<f64> = match &long_tail {
            Some(p) => continuous
                .iter()
                .map(|&v| p.compress(v))
                .collect::<Result<_>>()?,
            None => continuous.clone(),
        };
        let raw = |x: f64| long_tail.map_or(x, |p| p.expand(x));

        let mut located: Vec<(f64, ModeSlot)> = Vec::new();
        let normalizer = if transformed.is_empty() {
            Normalizer::MinMax { min: 0.0, max: 0.0 }
        } else if config.use_vgm {
            let gmm = fit_vgm(&transformed, &config.vgm)?;
            for (k, m) in gmm.modes().iter().enumerate() {
                located.push((raw(m.mean), ModeSlot::Continuous { index: k }));
            }
            Normalizer::Vgm {
                gmm,
                weighting: config.weighting,
            }
        } else {
            let min = transformed.iter().copied().fold(f64::INFINITY, f64::min);
            let max = transformed
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if mixed {
                located.push((raw(0.5 * (min + max)), ModeSlot::Continuous { index: 0 }));
            }
            Normalizer::MinMax { min, max }
        };
        for &v in &special {
            located.push((v, ModeSlot::Value { value: v }));
        }
        located.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut slots: Vec<ModeSlot> = located.into_iter().map(|(_, s)| s).collect();
        if has_missing {
            slots.push(ModeSlot::Missing);
        }
        Ok(NumericCodec {
            name: name.to_string(),
            mixed,
            normalizer,
            long_tail,
            slots,
            bounds,
        })
    }

    pub fn mode_width(&self) -> usize {
        self.slots.len()
    }

    fn slot_of(&self, wanted: ModeSlot) -> Option<usize> {
        self.slots.iter().position(|s| *s == wanted)
    }

    /// Encodes one cell into α and the selected mode slot (`None` when the
    /// column has no mode segment).
    pub fn encode(&self, cell: Option<f64>) -> Result<(f64, Option<usize>)> {
        let Some(value) = cell else {
            return self
                .slot_of(ModeSlot::Missing)
                .map(|s| (0.0, Some(s)))
                .ok_or_else(|| Error::UnseenCategory {
                    column: self.name.clone(),
                    token: "<missing>".into(),
                });
        };
        if let Some(s) = self
            .slots
            .iter()
            .position(|s| matches!(s, ModeSlot::Value { value: v } if *v == value))
        {
            return Ok((0.0, Some(s)));
        }
        let x = match &self.long_tail {
            Some(p) => p.compress(value)?,
            None => value,
        };
        match &self.normalizer {
            Normalizer::Vgm { gmm, weighting } => {
                let k = gmm.select_mode(x, *weighting);
                let m = gmm.modes()[k];
                let alpha = ((x - m.mean) / (4.0 * m.std)).clamp(-1.0, 1.0);
                Ok((alpha, self.slot_of(ModeSlot::Continuous { index: k })))
            }
            Normalizer::MinMax { min, max } => {
                let alpha = if max > min {
                    (2.0 * (x - min) / (max - min) - 1.0).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
                Ok((alpha, self.slot_of(ModeSlot::Continuous { index: 0 })))
            }
        }
    }

    /// Inverse of [`encode`](Self::encode). Special values come back exactly.
    pub fn decode(&self, alpha: f64, slot: Option<usize>) -> Result<Option<f64>> {
        let alpha = alpha.clamp(-1.0, 1.0);
        let continuous = match slot.map(|s| self.slots.get(s)) {
            Some(None) => {
                return Err(Error::Shape(format!(
                    "mode index out of range for `{}`",
                    self.name
                )))
            }
            Some(Some(ModeSlot::Missing)) => return Ok(None),
            Some(Some(ModeSlot::Value { value })) => return Ok(Some(*value)),
            Some(Some(ModeSlot::Continuous { index })) => *index,
            None => 0,
        };
        let x = match &self.normalizer {
            Normalizer::Vgm { gmm, .. } => {
                let m = gmm.modes()[continuous];
                m.mean + 4.0 * m.std * alpha
            }
            Normalizer::MinMax { min, max } => min + 0.5 * (alpha + 1.0) * (max - min),
        };
        Ok(Some(match &self.long_tail {
            Some(p) => p.expand(x),
            None => x,
        }))
    }

    /// Raw-unit value a continuous slot decodes to at α, used where a
    /// differentiable decode is needed; special slots return their value and
    /// the missing slot returns `None`.
    pub fn slot_value(&self, slot: usize, alpha: f64) -> Option<f64> {
        self.decode(alpha, Some(slot)).ok().flatten()
    }

    /// d(decoded value)/dα at a continuous slot; zero for special slots.
    pub fn slot_alpha_derivative(&self, slot: usize, alpha: f64) -> f64 {
        self.alpha_derivative(Some(slot), alpha)
    }

    /// Like [`slot_alpha_derivative`](Self::slot_alpha_derivative), with
    /// `None` for a column that has no mode segment.
    pub fn alpha_derivative(&self, slot: Option<usize>, alpha: f64) -> f64 {
        let index = match slot.map(|s| self.slots.get(s)) {
            Some(Some(ModeSlot::Continuous { index })) => index,
            None => &0,
            _ => return 0.0,
        };
        let (x, dx) = match &self.normalizer {
            Normalizer::Vgm { gmm, .. } => {
                let m = gmm.modes()[*index];
                (m.mean + 4.0 * m.std * alpha, 4.0 * m.std)
            }
            Normalizer::MinMax { min, max } => {
                (min + 0.5 * (alpha + 1.0) * (max - min), 0.5 * (max - min))
            }
        };
        match &self.long_tail {
            Some(p) if p.lower > 0.0 => x.exp() * dx,
            Some(p) => (x - p.epsilon.ln()).exp() * p.epsilon * dx,
            None => dx,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::vgm::Mode;

    fn fig3_codec() -> NumericCodec {
        // Special values at -1 and 10 bracket two continuous modes at 2 and 6.
        let gmm = GaussianMixtureModel::from_modes(vec![
            Mode {
                weight: 0.6,
                mean: 2.0,
                std: 0.5,
            },
            Mode {
                weight: 0.4,
                mean: 6.0,
                std: 0.5,
            },
        ])
        .unwrap();
        NumericCodec {
            name: "c2".into(),
            mixed: true,
            normalizer: Normalizer::Vgm {
                gmm,
                weighting: ModeWeighting::Weighted,
            },
            long_tail: None,
            slots: vec![
                ModeSlot::Value { value: -1.0 },
                ModeSlot::Continuous { index: 0 },
                ModeSlot::Continuous { index: 1 },
                ModeSlot::Value { value: 10.0 },
            ],
            bounds: (-1.0, 10.0),
        }
    }

    #[test]
    fn mode_mean_encodes_to_zero() {
        let c = fig3_codec();
        assert_eq!(c.encode(Some(2.0)).unwrap(), (0.0, Some(1)));
        assert_eq!(c.decode(0.0, Some(1)).unwrap(), Some(2.0));
    }

    #[test]
    fn value_near_first_continuous_mode_selects_second_slot() {
        let (_, slot) = fig3_codec().encode(Some(2.3)).unwrap();
        let mut beta = [0; 4];
        beta[slot.unwrap()] = 1;
        assert_eq!(beta, [0, 1, 0, 0]);
    }

    #[test]
    fn special_value_is_exact() {
        let c = fig3_codec();
        assert_eq!(c.encode(Some(10.0)).unwrap(), (0.0, Some(3)));
        assert_eq!(c.decode(0.37, Some(3)).unwrap(), Some(10.0));
    }

    #[test]
    fn far_value_clips() {
        let c = fig3_codec();
        // 8σ below the lower continuous mode.
        let (alpha, slot) = c.encode(Some(2.0 - 8.0 * 0.5)).unwrap();
        assert_eq!(slot, Some(1));
        assert_eq!(alpha, -1.0);
        let (alpha, _) = c.encode(Some(6.0 + 5.0 * 0.5)).unwrap();
        assert_eq!(alpha, 1.0);
    }

    #[test]
    fn mixed_fit_places_missing_last() {
        let mut values: Vec<Option<f64>> = (0..400).map(|i| Some(10.0 + (i % 37) as f64)).collect();
        values.extend((0..100).map(|_| Some(0.0)));
        values.extend((0..50).map(|_| None));
        let kind = ColumnKind::Mixed {
            categorical_values: vec![0.0],
            log_transform: false,
        };
        let c = NumericCodec::fit("m", &kind, &values, &CodecConfig::default()).unwrap();
        assert_eq!(c.slots.first(), Some(&ModeSlot::Value { value: 0.0 }));
        assert_eq!(c.slots.last(), Some(&ModeSlot::Missing));
        let (a, s) = c.encode(None).unwrap();
        assert_eq!(a, 0.0);
        assert_eq!(s, Some(c.mode_width() - 1));
        assert_eq!(c.decode(0.0, s).unwrap(), None);
        assert_eq!(c.decode(0.0, Some(0)).unwrap(), Some(0.0));
    }

    #[test]
    fn continuous_rejects_missing() {
        let kind = ColumnKind::Continuous {
            log_transform: false,
        };
        assert!(
            NumericCodec::fit("x", &kind, &[Some(1.0), None], &CodecConfig::default()).is_err()
        );
    }

    #[test]
    fn categorical_one_hot_positions() {
        let tokens: Vec<Option<String>> = ["b", "a", "c", "a"]
            .iter()
            .map(|s| Some(s.to_string()))
            .collect();
        let c = CategoricalCodec::fit("k", &tokens);
        assert_eq!(c.width(), 3);
        assert_eq!(c.encode(Some("b")).unwrap(), 1);
        assert!(matches!(
            c.encode(Some("zzz")),
            Err(Error::UnseenCategory { .. })
        ));
        assert!(c.encode(None).is_err());
    }

    #[test]
    fn categorical_missing_is_last_bit() {
        let tokens = vec![Some("x".to_string()), None, Some("y".to_string())];
        let c = CategoricalCodec::fit("k", &tokens);
        assert_eq!(c.width(), 3);
        assert_eq!(c.encode(None).unwrap(), 2);
        assert_eq!(c.decode(2).unwrap(), Cell::Missing);
    }

    #[test]
    fn min_max_continuous_has_no_mode_segment() {
        let values: Vec<Option<f64>> = (0..100).map(|i| Some(i as f64)).collect();
        let kind = ColumnKind::Continuous {
            log_transform: false,
        };
        let cfg = CodecConfig {
            use_vgm: false,
            ..Default::default()
        };
        let c = NumericCodec::fit("x", &kind, &values, &cfg).unwrap();
        assert_eq!(c.mode_width(), 0);
        assert_eq!(c.encode(Some(0.0)).unwrap(), (-1.0, None));
        assert_eq!(c.encode(Some(99.0)).unwrap(), (1.0, None));
        assert_eq!(c.decode(0.0, None).unwrap(), Some(49.5));
    }

    #[test]
    fn alpha_derivative_matches_finite_difference() {
        let values: Vec<Option<f64>> = (1..500).map(|i| Some((i as f64).powf(1.7))).collect();
        for log_transform in [false, true] {
            let kind = ColumnKind::Continuous { log_transform };
            let c = NumericCodec::fit("x", &kind, &values, &CodecConfig::default()).unwrap();
            for slot in 0..c.mode_width() {
                for alpha in [-0.5, 0.0, 0.3] {
                    let h = 1e-6;
                    let fd = (c.slot_value(slot, alpha + h).unwrap()
                        - c.slot_value(slot, alpha - h).unwrap())
                        / (2.0 * h);
                    let an = c.slot_alpha_derivative(slot, alpha);
                    assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{fd} vs {an}");
                }
            }
        }
    }
}
