use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::stats::percentile;
use crate::data::{Schema, Table};
use crate::error::{Error, Result};

pub const PRIVACY_PERCENTILE: f64 = 5.0;

/// Which pair of sets a privacy distance is measured between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistancePair {
    /// Synthetic rows against their nearest real rows.
    RealSynthetic,
    /// Real rows against other real rows.
    WithinReal,
    /// Synthetic rows against other synthetic rows.
    WithinSynthetic,
}

#[derive(Debug, Clone)]
enum Part {
    Numeric {
        name: String,
        lo: f64,
        span: f64,
        missing_flag: bool,
    },
    Categorical {
        name: String,
        classes: Vec<String>,
    },
}

/// Row representation for distances: numeric columns min-max scaled with the
/// real bounds, categorical columns one-hot with each block scaled by 1/√2
/// so that a category change costs exactly 1. Missing numeric cells sit at 0
/// with a separate indicator.
#[derive(Debug, Clone)]
pub struct DistanceSpace {
    parts: Vec<Part>,
    width: usize,
}

impl DistanceSpace {
    pub fn fit(real: &Table, synth: &Table, schema: &Schema) -> Result<Self> {
        let mut parts = Vec::new();
        let mut width = 0;
        for spec in schema.included() {
            let r = real.column(&spec.name)?;
            let s = synth.column(&spec.name)?;
            if spec.kind.is_numeric() {
                let present: Vec<f64> = r.numbers().iter().flatten().copied().collect();
                let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let (lo, span) = if present.is_empty() {
                    (0.0, 1.0)
                } else if hi > lo {
                    (lo, hi - lo)
                } else {
                    (lo, 1.0)
                };
                let missing_flag = r.missing_count() > 0 || s.missing_count() > 0;
                width += 1 + missing_flag as usize;
                parts.push(Part::Numeric {
                    name: spec.name.clone(),
                    lo,
                    span,
                    missing_flag,
                });
            } else {
                let classes: BTreeSet<String> = r
                    .tokens()
                    .iter()
                    .chain(s.tokens())
                    .map(|t| t.clone().unwrap_or_default())
                    .collect();
                width += classes.len();
                parts.push(Part::Categorical {
                    name: spec.name.clone(),
                    classes: classes.into_iter().collect(),
                });
            }
        }
        Ok(DistanceSpace { parts, width })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn embed(&self, table: &Table) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((table.n_rows(), self.width));
        let mut offset = 0;
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        for part in &self.parts {
            match part {
                Part::Numeric {
                    name,
                    lo,
                    span,
                    missing_flag,
                } => {
                    let col = table.column(name)?;
                    for (r, v) in col.numbers().iter().enumerate() {
                        match v {
                            Some(v) => out[[r, offset]] = (v - lo) / span,
                            None if *missing_flag => out[[r, offset + 1]] = 1.0,
                            None => {}
                        }
                    }
                    offset += 1 + *missing_flag as usize;
                }
                Part::Categorical { name, classes } => {
                    let col = table.column(name)?;
                    for (r, t) in col.tokens().iter().enumerate() {
                        let key = t.as_deref().unwrap_or("");
                        if let Ok(k) = classes.binary_search_by(|c| c.as_str().cmp(key)) {
                            out[[r, offset + k]] = scale;
                        }
                    }
                    offset += classes.len();
                }
            }
        }
        Ok(out)
    }
}

fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Closest and second-closest reference distances for each query row. With
/// `exclude_self`, query and reference are the same set and a row is not its
/// own neighbour.
pub fn nearest_two(
    query: &Array2<f64>,
    reference: &Array2<f64>,
    exclude_self: bool,
) -> Result<Vec<(f64, f64)>> {
    let needed = if exclude_self { 3 } else { 2 };
    if reference.nrows() < needed {
        return Err(Error::InvalidArgument(format!(
            "need at least {needed} reference rows, got {}",
            reference.nrows()
        )));
    }
    if query.ncols() != reference.ncols() {
        return Err(Error::Shape("query and reference widths differ".into()));
    }
    Ok(query
        .outer_iter()
        .enumerate()
        .map(|(i, q)| {
            let (mut d1, mut d2) = (f64::INFINITY, f64::INFINITY);
            for (j, r) in reference.outer_iter().enumerate() {
                if exclude_self && i == j {
                    continue;
                }
                let d = distance(q, r);
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                } else if d < d2 {
                    d2 = d;
                }
            }
            (d1, d2)
        })
        .collect())
}

fn pairs(real: &Array2<f64>, synth: &Array2<f64>, which: DistancePair) -> Result<Vec<(f64, f64)>> {
    match which {
        DistancePair::RealSynthetic => nearest_two(synth, real, false),
        DistancePair::WithinReal => nearest_two(real, real, true),
        DistancePair::WithinSynthetic => nearest_two(synth, synth, true),
    }
}

/// 5th percentile of distances to the closest record.
pub fn dcr(real: &Array2<f64>, synth: &Array2<f64>, which: DistancePair) -> Result<f64> {
    let d: Vec<f64> = pairs(real, synth, which)?
        .into_iter()
        .map(|p| p.0)
        .collect();
    percentile(&d, PRIVACY_PERCENTILE)
}

/// Nearest-neighbour distance ratio `d₁ / d₂`, 1 when `d₂ = 0`.
pub fn nndr_ratio(d1: f64, d2: f64) -> f64 {
    if d2 > 0.0 {
        d1 / d2
    } else {
        1.0
    }
}

/// 5th percentile of nearest-neighbour distance ratios.
pub fn nndr(real: &Array2<f64>, synth: &Array2<f64>, which: DistancePair) -> Result<f64> {
    let r: Vec<f64> = pairs(real, synth, which)?
        .into_iter()
        .map(|(a, b)| nndr_ratio(a, b))
        .collect();
    percentile(&r, PRIVACY_PERCENTILE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairValues {
    pub real_synthetic: f64,
    pub within_real: f64,
    pub within_synthetic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub dcr: PairValues,
    pub nndr: PairValues,
    /// Rows used per set after sampling.
    pub rows_used: (usize, usize),
}

impl PrivacyReport {
    pub fn compute(real: &Array2<f64>, synth: &Array2<f64>) -> Result<Self> {
        let mut dcr_v = [0.0; 3];
        let mut nndr_v = [0.0; 3];
        for (k, which) in [
            DistancePair::RealSynthetic,
            DistancePair::WithinReal,
            DistancePair::WithinSynthetic,
        ]
        .into_iter()
        .enumerate()
        {
            let p = pairs(real, synth, which)?;
            dcr_v[k] = percentile(
                &p.iter().map(|x| x.0).collect::<Vec<_>>(),
                PRIVACY_PERCENTILE,
            )?;
            nndr_v[k] = percentile(
                &p.iter().map(|&(a, b)| nndr_ratio(a, b)).collect::<Vec<_>>(),
                PRIVACY_PERCENTILE,
            )?;
        }
        let triple = |v: [f64; 3]| PairValues {
            real_synthetic: v[0],
            within_real: v[1],
            within_synthetic: v[2],
        };
        Ok(PrivacyReport {
            dcr: triple(dcr_v),
            nndr: triple(nndr_v),
            rows_used: (real.nrows(), synth.nrows()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, ColumnKind, ColumnSpec};
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_geometry() {
        let real = arr2(&[[0.0, 0.0], [1.0, 0.0]]);
        let synth = arr2(&[[0.25, 0.0]]);
        let p = nearest_two(&synth, &real, false).unwrap();
        assert_eq!(p[0].0, 0.25);
        let real = arr2(&[[0.0, 0.0], [10.0, 0.0]]);
        let synth = arr2(&[[1.0, 0.0]]);
        let (a, b) = nearest_two(&synth, &real, false).unwrap()[0];
        assert!((nndr_ratio(a, b) - 1.0 / 9.0).abs() < 1e-15);
        let mid = arr2(&[[5.0, 0.0]]);
        let (a, b) = nearest_two(&mid, &real, false).unwrap()[0];
        assert_eq!(nndr_ratio(a, b), 1.0);
        assert_eq!(nndr_ratio(0.0, 0.0), 1.0);
    }

    #[test]
    fn copy_has_zero_dcr() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let real = Array2::from_shape_fn((50, 3), |_| rng.random::<f64>());
        assert_eq!(dcr(&real, &real, DistancePair::RealSynthetic).unwrap(), 0.0);
    }

    #[test]
    fn too_small_reference() {
        let one = arr2(&[[0.0]]);
        assert!(dcr(&one, &one, DistancePair::RealSynthetic).is_err());
        let two = arr2(&[[0.0], [1.0]]);
        assert!(dcr(&two, &two, DistancePair::WithinReal).is_err());
    }

    /// Full sorted distance list per query, written separately from the
    /// streaming two-minimum scan.
    fn sorted_oracle(q: &Array2<f64>, r: &Array2<f64>, exclude_self: bool) -> Vec<(f64, f64)> {
        q.outer_iter()
            .enumerate()
            .map(|(i, a)| {
                let mut d: Vec<f64> = r
                    .outer_iter()
                    .enumerate()
                    .filter(|(j, _)| !(exclude_self && *j == i))
                    .map(|(_, b)| {
                        let mut s = 0.0;
                        for k in 0..a.len() {
                            s += (a[k] - b[k]).powi(2);
                        }
                        s.sqrt()
                    })
                    .collect();
                d.sort_by(f64::total_cmp);
                (d[0], d[1])
            })
            .collect()
    }

    fn percentile_oracle(mut v: Vec<f64>, q: f64) -> f64 {
        v.sort_by(f64::total_cmp);
        let h = (v.len() - 1) as f64 * q / 100.0;
        let i = h as usize;
        if i + 1 < v.len() {
            v[i] * (1.0 - (h - i as f64)) + v[i + 1] * (h - i as f64)
        } else {
            v[i]
        }
    }

    #[test]
    fn agrees_with_sorted_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let real = Array2::from_shape_fn((500, 4), |_| rng.random::<f64>());
        let synth = Array2::from_shape_fn((500, 4), |_| rng.random::<f64>());
        for (q, r, ex) in [(&synth, &real, false), (&real, &real, true)] {
            let got = nearest_two(q, r, ex).unwrap();
            let want = sorted_oracle(q, r, ex);
            for (g, w) in got.iter().zip(&want) {
                assert!((g.0 - w.0).abs() <= 1e-12 && (g.1 - w.1).abs() <= 1e-12);
            }
            let ratios: Vec<f64> = want.iter().map(|&(a, b)| nndr_ratio(a, b)).collect();
            let via = percentile(&ratios, 5.0).unwrap();
            assert!((via - percentile_oracle(ratios, 5.0)).abs() <= 1e-12);
        }
    }

    fn tables() -> (Table, Table, Schema) {
        let real = Table::new(vec![
            Column::from_numbers("x", vec![Some(0.0), Some(10.0), Some(5.0), None]),
            Column::new(
                "k",
                ["a", "b", "a", "a"]
                    .iter()
                    .map(|s| Some(s.to_string()))
                    .collect(),
            ),
        ])
        .unwrap();
        let synth = Table::new(vec![
            Column::from_numbers("x", vec![Some(20.0), Some(5.0), Some(0.0), Some(1.0)]),
            Column::new(
                "k",
                ["c", "b", "a", "a"]
                    .iter()
                    .map(|s| Some(s.to_string()))
                    .collect(),
            ),
        ])
        .unwrap();
        let schema = Schema::new(vec![
            ColumnSpec::new(
                "x",
                ColumnKind::Mixed {
                    categorical_values: vec![],
                    log_transform: false,
                },
            ),
            ColumnSpec::new("k", ColumnKind::Categorical),
        ])
        .unwrap();
        (real, synth, schema)
    }

    #[test]
    fn category_flip_costs_one() {
        let (real, synth, schema) = tables();
        let space = DistanceSpace::fit(&real, &synth, &schema).unwrap();
        assert_eq!(space.width(), 2 + 3);
        let r = space.embed(&real).unwrap();
        // rows 0 and 2 differ only by x: 0 vs 0.5
        assert!((distance(r.row(0), r.row(2)) - 0.5).abs() < 1e-15);
        let s = space.embed(&synth).unwrap();
        // synth row 2 = (0, a) equals real row 0; synth row 1 = (0.5, b) vs real row 2 = (0.5, a)
        assert_eq!(distance(s.row(2), r.row(0)), 0.0);
        assert!((distance(s.row(1), r.row(2)) - 1.0).abs() < 1e-12);
        // missing indicator
        assert_eq!(r[[3, 1]], 1.0);
    }

    #[test]
    fn within_real_ignores_synthetic() {
        let (real, synth, schema) = tables();
        let other = real.clone();
        let a = DistanceSpace::fit(&real, &synth, &schema).unwrap();
        let b = DistanceSpace::fit(&real, &other, &schema).unwrap();
        let ra = a.embed(&real).unwrap();
        let rb = b.embed(&real).unwrap();
        let wa = dcr(&ra, &ra, DistancePair::WithinReal).unwrap();
        let wb = dcr(&rb, &rb, DistancePair::WithinReal).unwrap();
        assert!((wa - wb).abs() < 1e-15);
    }
}
