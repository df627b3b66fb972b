use std::collections::BTreeSet;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::classifiers::ClassifierPlugin;
use crate::data::{Schema, Table};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Feature {
    Numeric { name: String, lo: f64, span: f64 },
    Categorical { name: String, classes: Vec<String> },
}

/// Feature matrix layout fitted on the real training table: numeric columns
/// min-max scaled (missing cells at 0), categorical columns one-hot with
/// unseen classes left all-zero.
#[derive(Debug, Clone)]
pub struct FeatureEncoder {
    features: Vec<Feature>,
    width: usize,
    target: String,
    classes: Vec<String>,
}

impl FeatureEncoder {
    /// `extra_labels` lists further tables whose target classes must be
    /// representable (test and synthetic sets).
    pub fn fit(
        train: &Table,
        schema: &Schema,
        target: &str,
        extra_labels: &[&Table],
    ) -> Result<Self> {
        let spec = schema
            .column(target)
            .ok_or_else(|| Error::UnknownColumn(target.to_string()))?;
        if spec.kind.is_numeric() {
            return Err(Error::InvalidTarget(format!(
                "`{target}` is not categorical"
            )));
        }
        let mut features = Vec::new();
        let mut width = 0;
        for spec in schema.included().filter(|s| s.name != target) {
            let col = train.column(&spec.name)?;
            if spec.kind.is_numeric() {
                let present: Vec<f64> = col.numbers().iter().flatten().copied().collect();
                let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let (lo, span) = if hi > lo {
                    (lo, hi - lo)
                } else {
                    (lo.min(0.0), 1.0)
                };
                features.push(Feature::Numeric {
                    name: spec.name.clone(),
                    lo: if lo.is_finite() { lo } else { 0.0 },
                    span,
                });
                width += 1;
            } else {
                let classes: BTreeSet<String> = col
                    .tokens()
                    .iter()
                    .map(|t| t.clone().unwrap_or_default())
                    .collect();
                width += classes.len();
                features.push(Feature::Categorical {
                    name: spec.name.clone(),
                    classes: classes.into_iter().collect(),
                });
            }
        }
        if width == 0 {
            return Err(Error::InvalidSchema(
                "no feature columns besides the target".into(),
            ));
        }
        let mut classes = BTreeSet::new();
        for t in std::iter::once(train).chain(extra_labels.iter().copied()) {
            for v in t.column(target)?.tokens() {
                classes.insert(v.clone().unwrap_or_default());
            }
        }
        Ok(FeatureEncoder {
            features,
            width,
            target: target.to_string(),
            classes: classes.into_iter().collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn features(&self, table: &Table) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((table.n_rows(), self.width));
        let mut offset = 0;
        for f in &self.features {
            match f {
                Feature::Numeric { name, lo, span } => {
                    for (r, v) in table.column(name)?.numbers().iter().enumerate() {
                        if let Some(v) = v {
                            out[[r, offset]] = (v - lo) / span;
                        }
                    }
                    offset += 1;
                }
                Feature::Categorical { name, classes } => {
                    for (r, t) in table.column(name)?.tokens().iter().enumerate() {
                        let key = t.as_deref().unwrap_or("");
                        if let Ok(k) = classes.binary_search_by(|c| c.as_str().cmp(key)) {
                            out[[r, offset + k]] = 1.0;
                        }
                    }
                    offset += classes.len();
                }
            }
        }
        Ok(out)
    }

    pub fn labels(&self, table: &Table) -> Result<Vec<usize>> {
        table
            .column(&self.target)?
            .tokens()
            .iter()
            .map(|t| {
                let key = t.as_deref().unwrap_or("");
                self.classes
                    .binary_search_by(|c| c.as_str().cmp(key))
                    .map_err(|_| Error::UnseenCategory {
                        column: self.target.clone(),
                        token: key.to_string(),
                    })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
}

impl Scores {
    pub fn compute(truth: &[usize], proba: &Array2<f64>) -> Self {
        let k = proba.ncols();
        let predicted: Vec<usize> = proba
            .outer_iter()
            .map(|row| (0..k).fold(0, |best, c| if row[c] > row[best] { c } else { best }))
            .collect();
        let n = truth.len() as f64;
        let accuracy = truth.iter().zip(&predicted).filter(|(a, b)| a == b).count() as f64 / n;
        Scores {
            accuracy,
            f1: macro_f1(truth, &predicted, k),
            auc: macro_auc(truth, proba),
        }
    }

    fn minus(&self, other: &Scores) -> Scores {
        Scores {
            accuracy: self.accuracy - other.accuracy,
            f1: self.f1 - other.f1,
            auc: self.auc - other.auc,
        }
    }
}

/// Macro F1 over classes that occur in the truth or the predictions.
pub fn macro_f1(truth: &[usize], predicted: &[usize], n_classes: usize) -> f64 {
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fneg = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..n_classes {
        let denom = 2 * tp[c] + fp[c] + fneg[c];
        if denom == 0 {
            continue;
        }
        used += 1;
        total += 2.0 * tp[c] as f64 / denom as f64;
    }
    if used == 0 {
        0.0
    } else {
        total / used as f64
    }
}

/// Area under the ROC curve from the Mann-Whitney statistic with average
/// ranks for ties. `None` when either group is empty.
pub fn binary_auc(positive: &[bool], score: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && score[order[j + 1]] == score[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &r in &order[i..=j] {
            if positive[r] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// One-vs-rest AUC averaged over classes present in the truth. A single
/// class in the truth gives 0.5.
pub fn macro_auc(truth: &[usize], proba: &Array2<f64>) -> f64 {
    let aucs: Vec<f64> = (0..proba.ncols())
        .filter_map(|c| {
            let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
            binary_auc(&positive, &proba.column(c).to_vec())
        })
        .collect();
    if aucs.is_empty() {
        0.5
    } else {
        aucs.iter().sum::<f64>() / aucs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelUtility {
    pub model: String,
    pub real: Option<Scores>,
    pub synthetic: Option<Scores>,
    /// Real-trained minus synthetic-trained.
    pub difference: Option<Scores>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub target: String,
    pub models: Vec<ModelUtility>,
    /// Mean difference over models that completed.
    pub average_difference: Option<Scores>,
    pub warnings: Vec<String>,
}

fn fit_and_score(
    plugin: &mut dyn ClassifierPlugin,
    x: &Array2<f64>,
    y: &[usize],
    k: usize,
    test_x: &Array2<f64>,
    test_y: &[usize],
) -> Result<Scores> {
    plugin.fit(x, y, k)?;
    let p = plugin.predict_proba(test_x)?;
    Ok(Scores::compute(test_y, &p))
}

/// Trains each plugin on the real and on the synthetic training set and
/// scores both on the real test set.
pub fn ml_utility(
    real_train: &Table,
    synth_train: &Table,
    real_test: &Table,
    schema: &Schema,
    target: &str,
    plugins: &mut [Box<dyn ClassifierPlugin>],
) -> Result<UtilityReport> {
    let encoder = FeatureEncoder::fit(real_train, schema, target, &[real_test, synth_train])?;
    let mut warnings = Vec::new();
    if synth_train.n_rows() != real_train.n_rows() {
        let msg = format!(
            "synthetic set has {} rows, real training set {}",
            synth_train.n_rows(),
            real_train.n_rows()
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let k = encoder.classes().len();
    let (rx, ry) = (encoder.features(real_train)?, encoder.labels(real_train)?);
    let (sx, sy) = (encoder.features(synth_train)?, encoder.labels(synth_train)?);
    let (tx, ty) = (encoder.features(real_test)?, encoder.labels(real_test)?);
    let mut models = Vec::new();
    for plugin in plugins.iter_mut() {
        let name = plugin.name().to_string();
        let real = fit_and_score(plugin.as_mut(), &rx, &ry, k, &tx, &ty);
        let synthetic = fit_and_score(plugin.as_mut(), &sx, &sy, k, &tx, &ty);
        let error = [&real, &synthetic]
            .iter()
            .filter_map(|r| r.as_ref().err().map(|e| e.to_string()))
            .next();
        let (real, synthetic) = (real.ok(), synthetic.ok());
        let difference = match (&real, &synthetic) {
            (Some(a), Some(b)) => Some(a.minus(b)),
            _ => None,
        };
        models.push(ModelUtility {
            model: name,
            real,
            synthetic,
            difference,
            error,
        });
    }
    let done: Vec<&Scores> = models
        .iter()
        .filter_map(|m| m.difference.as_ref())
        .collect();
    let average_difference = (!done.is_empty()).then(|| {
        let n = done.len() as f64;
        Scores {
            accuracy: done.iter().map(|s| s.accuracy).sum::<f64>() / n,
            f1: done.iter().map(|s| s.f1).sum::<f64>() / n,
            auc: done.iter().map(|s| s.auc).sum::<f64>() / n,
        }
    });
    Ok(UtilityReport {
        target: target.to_string(),
        models,
        average_difference,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{stratified_split, Column, ColumnKind, ColumnSpec, TargetSpec};
    use crate::evaluate::classifiers::builtin_plugins;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn separable(n: usize, seed: u64) -> (Table, Schema) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut g = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let v: f64 = rng.random_range(0.0..10.0);
            let group = ["p", "q"][rng.random_range(0..2)];
            x.push(Some(v));
            g.push(Some(group.to_string()));
            y.push(Some(if v > 5.0 { "hi" } else { "lo" }.to_string()));
        }
        let t = Table::new(vec![
            Column::from_numbers("x", x),
            Column::new("g", g),
            Column::new("y", y),
        ])
        .unwrap();
        let mut ys = ColumnSpec::new("y", ColumnKind::Categorical);
        ys.target = true;
        let s = Schema::new(vec![
            ColumnSpec::new(
                "x",
                ColumnKind::Continuous {
                    log_transform: false,
                },
            ),
            ColumnSpec::new("g", ColumnKind::Categorical),
            ys,
        ])
        .unwrap();
        (t, s)
    }

    #[test]
    fn auc_hand_examples() {
        assert_eq!(binary_auc(&[false, true], &[0.1, 0.9]), Some(1.0));
        assert_eq!(binary_auc(&[true, false], &[0.1, 0.9]), Some(0.0));
        assert_eq!(binary_auc(&[true, false], &[0.5, 0.5]), Some(0.5));
        // pairs (pos, neg): (0.8,0.3) win, (0.8,0.9) loss, (0.4,0.3) win, (0.4,0.9) loss
        assert_eq!(
            binary_auc(&[true, false, true, false], &[0.8, 0.3, 0.4, 0.9]),
            Some(0.5)
        );
        assert_eq!(binary_auc(&[true, true], &[0.1, 0.2]), None);
    }

    #[test]
    fn auc_matches_pair_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.random_range(2..40);
            let pos: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            let Some(got) = binary_auc(&pos, &s) else {
                continue;
            };
            let mut wins = 0.0;
            let mut pairs = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if pos[i] && !pos[j] {
                        pairs += 1.0;
                        wins += if s[i] > s[j] {
                            1.0
                        } else if s[i] == s[j] {
                            0.5
                        } else {
                            0.0
                        };
                    }
                }
            }
            assert!((got - wins / pairs).abs() < 1e-12);
        }
    }

    #[test]
    fn f1_examples() {
        assert_eq!(macro_f1(&[0, 1, 0, 1], &[0, 1, 0, 1], 2), 1.0);
        // class 0: tp 1 fp 0 fn 1 → 2/3; class 1: tp 1 fp 1 fn 0 → 2/3
        assert!((macro_f1(&[0, 0, 1], &[0, 1, 1], 2) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn null_check_is_exactly_zero() {
        let (t, s) = separable(600, 0);
        let (train, test) = stratified_split(&t, &TargetSpec::binary("y"), 0.3, 1).unwrap();
        let mut plugins = builtin_plugins();
        let r = ml_utility(&train, &train, &test, &s, "y", &mut plugins).unwrap();
        assert_eq!(r.models.len(), 2);
        for m in &r.models {
            let d = m.difference.unwrap();
            assert_eq!((d.accuracy, d.f1, d.auc), (0.0, 0.0, 0.0));
        }
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn shuffled_labels_lose_accuracy() {
        let (t, s) = separable(1000, 2);
        let (train, test) = stratified_split(&t, &TargetSpec::binary("y"), 0.3, 3).unwrap();
        let mut labels: Vec<Option<String>> = train.column("y").unwrap().tokens().to_vec();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
        let shuffled = Table::new(vec![
            train.column("x").unwrap().clone(),
            train.column("g").unwrap().clone(),
            Column::new("y", labels),
        ])
        .unwrap();
        let mut plugins = builtin_plugins();
        let r = ml_utility(&train, &shuffled, &test, &s, "y", &mut plugins).unwrap();
        for m in &r.models {
            assert!(
                m.difference.unwrap().accuracy >= 0.3,
                "{}: {:?}",
                m.model,
                m.difference
            );
        }
    }

    #[test]
    fn plugin_failure_is_recorded() {
        let (t, s) = separable(200, 5);
        let one_class = Table::new(vec![
            t.column("x").unwrap().clone(),
            t.column("g").unwrap().clone(),
            Column::new("y", vec![Some("hi".to_string()); 200]),
        ])
        .unwrap();
        let mut plugins = builtin_plugins();
        let r = ml_utility(&t, &one_class, &t, &s, "y", &mut plugins).unwrap();
        for m in &r.models {
            assert!(m.real.is_some() && m.synthetic.is_none() && m.error.is_some());
        }
        assert!(r.average_difference.is_none());
    }

    #[test]
    fn numeric_target_rejected() {
        let (t, s) = separable(50, 6);
        assert!(FeatureEncoder::fit(&t, &s, "x", &[]).is_err());
    }
}
