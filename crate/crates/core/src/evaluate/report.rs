use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::association::{diff_corr, AssociationMatrix};
use super::classifiers::builtin_plugins;
use super::privacy::{DistanceSpace, PrivacyReport};
use super::stats::{aligned_frequencies, ecdf_points, jsd, wasserstein_1d};
use super::utility::{ml_utility, UtilityReport};
use crate::data::{stratified_split, Schema, Table, TargetSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnWasserstein {
    pub raw: f64,
    /// Distance after min-max scaling both samples with the real bounds.
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub jsd: BTreeMap<String, f64>,
    pub avg_jsd: Option<f64>,
    pub wasserstein: BTreeMap<String, ColumnWasserstein>,
    pub avg_wd: Option<f64>,
    pub avg_wd_scaled: Option<f64>,
    pub diff_corr: Option<f64>,
    pub real_associations: Option<AssociationMatrix>,
    pub synthetic_associations: Option<AssociationMatrix>,
}

/// Plot data for one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnSeries {
    Ecdf {
        column: String,
        real: Vec<(f64, f64)>,
        synthetic: Vec<(f64, f64)>,
    },
    Frequencies {
        column: String,
        labels: Vec<String>,
        real: Vec<f64>,
        synthetic: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub real_rows: usize,
    pub synthetic_rows: usize,
    pub similarity: SimilarityReport,
    pub privacy: Option<PrivacyReport>,
    pub utility: Option<UtilityReport>,
    pub series: Vec<ColumnSeries>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions<'a> {
    /// Categorical target for the utility block; `None` skips it.
    pub target: Option<String>,
    /// Held-out real rows for utility scoring. Without one, the real table
    /// is split and its training part stands in for the real training set.
    pub real_test: Option<&'a Table>,
    pub test_fraction: f64,
    pub seed: u64,
    /// Maximum rows per set used for the privacy distances.
    pub privacy_sample: Option<usize>,
    pub privacy: bool,
    pub ecdf_points: usize,
}

impl Default for EvaluateOptions<'_> {
    fn default() -> Self {
        EvaluateOptions {
            target: None,
            real_test: None,
            test_fraction: 0.2,
            seed: 0,
            privacy_sample: Some(5000),
            privacy: true,
            ecdf_points: 100,
        }
    }
}

fn present(values: &[Option<f64>]) -> Vec<f64> {
    values.iter().flatten().copied().collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn subsample(table: &Table, cap: Option<usize>, seed: u64) -> Table {
    match cap {
        Some(cap) if table.n_rows() > cap => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = sample(&mut rng, table.n_rows(), cap).into_vec();
            rows.sort_unstable();
            table.select_rows(&rows)
        }
        _ => table.clone(),
    }
}

pub fn similarity(
    real: &Table,
    synth: &Table,
    schema: &Schema,
) -> Result<(SimilarityReport, Vec<ColumnSeries>, Vec<String>)> {
    similarity_with(real, synth, schema, 100)
}

fn similarity_with(
    real: &Table,
    synth: &Table,
    schema: &Schema,
    n_points: usize,
) -> Result<(SimilarityReport, Vec<ColumnSeries>, Vec<String>)> {
    let mut jsds = BTreeMap::new();
    let mut wds = BTreeMap::new();
    let mut series = Vec::new();
    let mut warnings = Vec::new();
    for spec in schema.included() {
        let r = real.column(&spec.name)?;
        let s = synth.column(&spec.name)?;
        if spec.kind.is_numeric() {
            let (a, b) = (present(r.numbers()), present(s.numbers()));
            if a.is_empty() || b.is_empty() {
                warnings.push(format!("`{}`: no numeric values to compare", spec.name));
                continue;
            }
            let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            let raw = wasserstein_1d(&a, &b)?;
            wds.insert(
                spec.name.clone(),
                ColumnWasserstein {
                    raw,
                    scaled: raw / span,
                },
            );
            series.push(ColumnSeries::Ecdf {
                column: spec.name.clone(),
                real: ecdf_points(&a, n_points),
                synthetic: ecdf_points(&b, n_points),
            });
        } else {
            let (labels, p, q) = aligned_frequencies(r.tokens(), s.tokens())?;
            jsds.insert(spec.name.clone(), jsd(&p, &q)?);
            series.push(ColumnSeries::Frequencies {
                column: spec.name.clone(),
                labels,
                real: p,
                synthetic: q,
            });
        }
    }
    let (real_assoc, synth_assoc, dc) = if schema.n_included() >= 2 {
        let ra = AssociationMatrix::compute(real, schema)?;
        let sa = AssociationMatrix::compute(synth, schema)?;
        warnings.extend(ra.warnings.iter().map(|w| format!("real: {w}")));
        warnings.extend(sa.warnings.iter().map(|w| format!("synthetic: {w}")));
        let dc = diff_corr(&ra, &sa)?;
        (Some(ra), Some(sa), Some(dc))
    } else {
        (None, None, None)
    };
    let jsd_values: Vec<f64> = jsds.values().copied().collect();
    let raw: Vec<f64> = wds.values().map(|w: &ColumnWasserstein| w.raw).collect();
    let scaled: Vec<f64> = wds.values().map(|w| w.scaled).collect();
    Ok((
        SimilarityReport {
            avg_jsd: mean(&jsd_values),
            jsd: jsds,
            avg_wd: mean(&raw),
            avg_wd_scaled: mean(&scaled),
            wasserstein: wds,
            diff_corr: dc,
            real_associations: real_assoc,
            synthetic_associations: synth_assoc,
        },
        series,
        warnings,
    ))
}

impl EvaluationReport {
    pub fn compute(
        real: &Table,
        synth: &Table,
        schema: &Schema,
        options: &EvaluateOptions,
    ) -> Result<Self> {
        schema.check_table(real)?;
        schema.check_table(synth)?;
        if real.is_empty() || synth.is_empty() {
            return Err(Error::EmptyTable);
        }
        let (similarity, series, mut warnings) =
            similarity_with(real, synth, schema, options.ecdf_points)?;

        let privacy = if options.privacy {
            let r = subsample(real, options.privacy_sample, options.seed);
            let s = subsample(synth, options.privacy_sample, options.seed.wrapping_add(1));
            let space = DistanceSpace::fit(&r, &s, schema)?;
            match PrivacyReport::compute(&space.embed(&r)?, &space.embed(&s)?) {
                Ok(p) => Some(p),
                Err(e) => {
                    warnings.push(format!("privacy distances skipped: {e}"));
                    None
                }
            }
        } else {
            None
        };

        let utility = match &options.target {
            None => None,
            Some(target) => {
                let spec = schema
                    .column(target)
                    .ok_or_else(|| Error::UnknownColumn(target.clone()))?;
                if spec.kind.is_numeric() {
                    return Err(Error::InvalidTarget(format!(
                        "`{target}` is numeric; utility needs a categorical target"
                    )));
                }
                let (train, test) = match options.real_test {
                    Some(test) => {
                        schema.check_table(test)?;
                        (real.clone(), test.clone())
                    }
                    None => stratified_split(
                        real,
                        &TargetSpec::multiclass(target.clone()),
                        options.test_fraction,
                        options.seed,
                    )?,
                };
                let mut plugins = builtin_plugins();
                Some(ml_utility(
                    &train,
                    synth,
                    &test,
                    schema,
                    target,
                    &mut plugins,
                )?)
            }
        };

        Ok(EvaluationReport {
            real_rows: real.n_rows(),
            synthetic_rows: synth.n_rows(),
            similarity,
            privacy,
            utility,
            series,
            warnings,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Plain-text summary of the headline numbers.
    pub fn summary(&self) -> String {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        out.push_str(&format!(
            "rows            real {} / synthetic {}\n",
            self.real_rows, self.synthetic_rows
        ));
        out.push_str(&format!("avg JSD         {}\n", f(self.similarity.avg_jsd)));
        out.push_str(&format!("avg WD          {}\n", f(self.similarity.avg_wd)));
        out.push_str(&format!(
            "avg WD (scaled) {}\n",
            f(self.similarity.avg_wd_scaled)
        ));
        out.push_str(&format!(
            "diff. corr.     {}\n",
            f(self.similarity.diff_corr)
        ));
        for (name, v) in &self.similarity.jsd {
            out.push_str(&format!("  jsd {name:<12} {v:.4}\n"));
        }
        for (name, w) in &self.similarity.wasserstein {
            out.push_str(&format!(
                "  wd  {name:<12} {:.4} (scaled {:.4})\n",
                w.raw, w.scaled
            ));
        }
        if let Some(p) = &self.privacy {
            out.push_str("privacy         R&S      R        S\n");
            out.push_str(&format!(
                "  DCR           {:.4}   {:.4}   {:.4}\n",
                p.dcr.real_synthetic, p.dcr.within_real, p.dcr.within_synthetic
            ));
            out.push_str(&format!(
                "  NNDR          {:.4}   {:.4}   {:.4}\n",
                p.nndr.real_synthetic, p.nndr.within_real, p.nndr.within_synthetic
            ));
        }
        if let Some(u) = &self.utility {
            out.push_str(&format!(
                "utility (target {}): real - synthetic\n",
                u.target
            ));
            for m in &u.models {
                match (&m.difference, &m.error) {
                    (Some(d), _) => out.push_str(&format!(
                        "  {:<20} acc {:+.4}  f1 {:+.4}  auc {:+.4}\n",
                        m.model, d.accuracy, d.f1, d.auc
                    )),
                    (None, Some(e)) => out.push_str(&format!("  {:<20} failed: {e}\n", m.model)),
                    (None, None) => {}
                }
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}
