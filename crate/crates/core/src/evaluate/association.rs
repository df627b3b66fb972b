use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{Schema, Table};
use crate::error::{Error, Result};

/// Pearson correlation over pairs where both values are present. `None`
/// when either side has no variance.
pub fn pearson(x: &[Option<f64>], y: &[Option<f64>]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn codes(tokens: &[Option<String>]) -> (Vec<usize>, usize) {
    let mut map: HashMap<&str, usize> = HashMap::new();
    let out = tokens
        .iter()
        .map(|t| {
            let k = t.as_deref().unwrap_or("");
            let next = map.len();
            *map.entry(k).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Theil's uncertainty coefficient `U(x | y)`: the fraction of the entropy
/// of `x` explained by knowing `y`. `None` when `x` is constant.
pub fn theils_u(x: &[Option<String>], y: &[Option<String>]) -> Option<f64> {
    if x.is_empty() || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let (cx, kx) = codes(x);
    let (cy, ky) = codes(y);
    let mut joint = vec![0usize; kx * ky];
    let mut count_x = vec![0usize; kx];
    let mut count_y = vec![0usize; ky];
    for (&a, &b) in cx.iter().zip(&cy) {
        joint[a * ky + b] += 1;
        count_x[a] += 1;
        count_y[b] += 1;
    }
    let hx = entropy(count_x.into_iter(), n);
    if hx <= 0.0 {
        return None;
    }
    let mut h_x_given_y = 0.0;
    for (b, &ny) in count_y.iter().enumerate() {
        if ny == 0 {
            continue;
        }
        let h = entropy((0..kx).map(|a| joint[a * ky + b]), ny as f64);
        h_x_given_y += ny as f64 / n * h;
    }
    Some(((hx - h_x_given_y) / hx).clamp(0.0, 1.0))
}

/// Correlation ratio η of a numeric column grouped by a categorical one, over
/// rows where the value is present. `None` when the values have no variance.
pub fn correlation_ratio(categories: &[Option<String>], values: &[Option<f64>]) -> Option<f64> {
    let (codes, k) = codes(categories);
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    let mut all = Vec::new();
    for (&c, v) in codes.iter().zip(values) {
        if let Some(v) = v {
            sum[c] += v;
            count[c] += 1;
            all.push(*v);
        }
    }
    if all.len() < 2 {
        return None;
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let total: f64 = all.iter().map(|v| (v - mean) * (v - mean)).sum();
    if total <= 0.0 {
        return None;
    }
    let between: f64 = sum
        .iter()
        .zip(&count)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| {
            let m = s / c as f64;
            c as f64 * (m - mean) * (m - mean)
        })
        .sum();
    Some((between / total).sqrt().clamp(0.0, 1.0))
}

/// Pairwise associations between included columns. Numeric pairs use
/// Pearson, categorical pairs Theil's U (`values[i][j] = U(i | j)`), mixed
/// pairs the correlation ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationMatrix {
    pub columns: Vec<String>,
    pub categorical: Vec<bool>,
    pub values: Vec<Vec<f64>>,
    /// Degenerate pairs that were assigned 0.
    pub warnings: Vec<String>,
}

impl AssociationMatrix {
    pub fn compute(table: &Table, schema: &Schema) -> Result<Self> {
        let specs: Vec<_> = schema.included().collect();
        if specs.len() < 2 {
            return Err(Error::InvalidArgument(
                "associations need at least two columns".into(),
            ));
        }
        let cols = specs
            .iter()
            .map(|s| table.column(&s.name))
            .collect::<Result<Vec<_>>>()?;
        let categorical: Vec<bool> = specs.iter().map(|s| !s.kind.is_numeric()).collect();
        let k = specs.len();
        let mut values = vec![vec![0.0; k]; k];
        let mut warnings = Vec::new();
        for i in 0..k {
            values[i][i] = 1.0;
            for j in 0..k {
                if i == j || (j < i && !(categorical[i] && categorical[j])) {
                    continue;
                }
                let v = match (categorical[i], categorical[j]) {
                    (false, false) => pearson(cols[i].numbers(), cols[j].numbers()),
                    (true, true) => theils_u(cols[i].tokens(), cols[j].tokens()),
                    (true, false) => correlation_ratio(cols[i].tokens(), cols[j].numbers()),
                    (false, true) => correlation_ratio(cols[j].tokens(), cols[i].numbers()),
                };
                let v = v.unwrap_or_else(|| {
                    warnings.push(format!(
                        "`{}` vs `{}`: degenerate column, association set to 0",
                        specs[i].name, specs[j].name
                    ));
                    0.0
                });
                values[i][j] = v;
                if !(categorical[i] && categorical[j]) {
                    values[j][i] = v;
                }
            }
        }
        Ok(AssociationMatrix {
            columns: specs.iter().map(|s| s.name.clone()).collect(),
            categorical,
            values,
            warnings,
        })
    }
}

/// Euclidean norm of the entrywise difference over the upper triangle, with
/// both directions for categorical pairs.
pub fn diff_corr(real: &AssociationMatrix, synth: &AssociationMatrix) -> Result<f64> {
    if real.columns != synth.columns || real.categorical != synth.categorical {
        return Err(Error::Shape(
            "association matrices cover different columns".into(),
        ));
    }
    let k = real.columns.len();
    let mut total = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            let d = real.values[i][j] - synth.values[i][j];
            total += d * d;
            if real.categorical[i] && real.categorical[j] {
                let d = real.values[j][i] - synth.values[j][i];
                total += d * d;
            }
        }
    }
    Ok(total.sqrt())
}
