//! A small planted dataset with known structure, used by the examples, the
//! guide and the acceptance suite.
//!
//! | column | kind | generating process |
//! |---|---|---|
//! | `a` | continuous | 0.6·𝒩(0, 1) + 0.4·𝒩(8, 1) |
//! | `b` | categorical | `b0`/`b1`/`b2` with probabilities 0.80/0.15/0.05 |
//! | `c` | mixed | exact 0 with probability 0.3, else log-normal e^{𝒩(3, 1)} |
//! | `y` | categorical target | `yes` when `(a > 4) ≠ (b = b1)`, else `no` |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::data::{infer_schema, Column, Schema, Table};
use crate::error::Result;

pub const ZERO_FRACTION: f64 = 0.3;
pub const A_MODES: [(f64, f64, f64); 2] = [(0.6, 0.0, 1.0), (0.4, 8.0, 1.0)];
pub const B_CLASSES: [(&str, f64); 3] = [("b0", 0.80), ("b1", 0.15), ("b2", 0.05)];

/// The rule that defines `y`.
pub fn label(a: f64, b: &str) -> &'static str {
    if (a > 4.0) != (b == "b1") {
        "yes"
    } else {
        "no"
    }
}

pub fn planted_table(rows: usize, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let low = Normal::new(A_MODES[0].1, A_MODES[0].2).expect("valid normal");
    let high = Normal::new(A_MODES[1].1, A_MODES[1].2).expect("valid normal");
    let bulk = LogNormal::new(3.0, 1.0).expect("valid log-normal");
    let (mut a, mut b, mut c, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..rows {
        let av = if rng.random::<f64>() < A_MODES[0].0 {
            low.sample(&mut rng)
        } else {
            high.sample(&mut rng)
        };
        let u: f64 = rng.random();
        let bv = if u < B_CLASSES[0].1 {
            B_CLASSES[0].0
        } else if u < B_CLASSES[0].1 + B_CLASSES[1].1 {
            B_CLASSES[1].0
        } else {
            B_CLASSES[2].0
        };
        let cv = if rng.random::<f64>() < ZERO_FRACTION {
            0.0
        } else {
            bulk.sample(&mut rng)
        };
        a.push(Some(av));
        b.push(Some(bv.to_string()));
        c.push(Some(cv));
        y.push(Some(label(av, bv).to_string()));
    }
    Table::new(vec![
        Column::from_numbers("a", a),
        Column::new("b", b),
        Column::from_numbers("c", c),
        Column::new("y", y),
    ])
    .expect("columns have equal length")
}

/// Inferred schema with `y` marked as the target.
pub fn planted_schema(table: &Table) -> Result<Schema> {
    let schema = infer_schema(table)?;
    let columns = schema
        .columns()
        .iter()
        .cloned()
        .map(|mut c| {
            c.target = c.name == "y";
            c
        })
        .collect();
    Schema::new(columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnKind;

    #[test]
    fn inferred_kinds() {
        let t = planted_table(2000, 1);
        let s = planted_schema(&t).unwrap();
        assert!(matches!(
            s.column("a").unwrap().kind,
            ColumnKind::Continuous { .. }
        ));
        assert_eq!(s.column("b").unwrap().kind, ColumnKind::Categorical);
        match &s.column("c").unwrap().kind {
            ColumnKind::Mixed {
                categorical_values, ..
            } => assert_eq!(categorical_values, &[0.0]),
            k => panic!("c inferred as {k:?}"),
        }
        assert_eq!(s.target().unwrap().name, "y");
    }

    #[test]
    fn planted_proportions() {
        let t = planted_table(20_000, 2);
        let zeros = t
            .column("c")
            .unwrap()
            .numbers()
            .iter()
            .filter(|v| **v == Some(0.0))
            .count();
        assert!((zeros as f64 / 20_000.0 - ZERO_FRACTION).abs() < 0.015);
        let b1 = t
            .column("b")
            .unwrap()
            .tokens()
            .iter()
            .filter(|v| v.as_deref() == Some("b1"))
            .count();
        assert!((b1 as f64 / 20_000.0 - 0.15).abs() < 0.015);
    }
}
