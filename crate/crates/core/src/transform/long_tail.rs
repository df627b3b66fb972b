use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log compression for long-tailed columns.
///
/// With a positive lower bound the value is simply `ln τ`. Otherwise it is
/// shifted first: `ln(τ - l + ε)`. The shifted branch is evaluated as
/// `ln ε + ln_1p((τ - l) / ε)` so values close to the bound keep full
/// relative precision through the inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTailParams {
    pub lower: f64,
    pub epsilon: f64,
}

impl LongTailParams {
    pub fn new(lower: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) || !lower.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "long-tail params need finite lower bound and epsilon > 0, got l={lower}, ε={epsilon}"
            )));
        }
        Ok(LongTailParams { lower, epsilon })
    }

    /// Parameters for a column whose training minimum is `lower`, with ε = 1.
    pub fn from_minimum(lower: f64) -> Result<Self> {
        Self::new(lower, 1.0)
    }

    pub fn compress(&self, value: f64) -> Result<f64> {
        log_compress(value, self)
    }

    pub fn expand(&self, compressed: f64) -> f64 {
        log_expand(compressed, self)
    }
}

pub fn log_compress(value: f64, params: &LongTailParams) -> Result<f64> {
    let domain_error = || Error::LongTailDomain {
        value,
        lower: params.lower,
    };
    if params.lower > 0.0 {
        if value > 0.0 {
            Ok(value.ln())
        } else {
            Err(domain_error())
        }
    } else if value >= params.lower {
        Ok(params.epsilon.ln() + ((value - params.lower) / params.epsilon).ln_1p())
    } else {
        Err(domain_error())
    }
}

pub fn log_expand(compressed: f64, params: &LongTailParams) -> f64 {
    if params.lower > 0.0 {
        compressed.exp()
    } else {
        params.lower + params.epsilon * (compressed - params.epsilon.ln()).exp_m1()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn positive_bound_is_plain_log() {
        let p = LongTailParams::new(0.5, 1.0).unwrap();
        assert_eq!(log_compress(1.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn shifted_branch_zero() {
        let p = LongTailParams::new(0.0, 1.0).unwrap();
        assert_eq!(log_compress(0.0, &p).unwrap(), 0.0);
        assert_eq!(log_expand(0.0, &p), 0.0);
    }

    #[test]
    fn shifted_branch_tail_value() {
        let p = LongTailParams::new(0.0, 1.0).unwrap();
        let got = log_compress(25_000.0, &p).unwrap();
        assert!((got - 25_001f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let p = LongTailParams::new(2.0, 1.0).unwrap();
        assert!(log_compress(0.0, &p).is_err());
        assert!(log_compress(-1.0, &p).is_err());
        let q = LongTailParams::new(-3.0, 1.0).unwrap();
        assert!(log_compress(-3.5, &q).is_err());
        assert!(LongTailParams::new(0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn strictly_increasing(lower in -100.0f64..100.0, a in 0.0f64..1e6, b in 0.0f64..1e6) {
            prop_assume!(a != b);
            let p = LongTailParams::new(lower, 1.0).unwrap();
            let (x, y) = (lower + a.min(b), lower + a.max(b));
            prop_assume!(x < y);
            prop_assert!(log_compress(x, &p).unwrap() < log_compress(y, &p).unwrap());
            let (cx, cy) = (log_compress(x, &p).unwrap(), log_compress(y, &p).unwrap());
            prop_assert!(log_expand(cx, &p) <= log_expand(cy, &p));
        }

        #[test]
        fn expand_inverts_compress(lower in -1e3f64..1e3, eps in 0.01f64..10.0, offset_exp in -3.0f64..6.0) {
            let p = LongTailParams::new(lower, eps).unwrap();
            let value = lower.max(0.0) + 10f64.powf(offset_exp);
            let back = log_expand(log_compress(value, &p).unwrap(), &p);
            let scale = value.abs().max(lower.abs()).max(eps);
            prop_assert!((back - value).abs() <= 1e-9 * scale, "value {} back {}", value, back);
        }
    }
}
