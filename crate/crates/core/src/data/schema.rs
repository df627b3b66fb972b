use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::table::{Column, Table};
use crate::error::{Error, Result};

/// How a column is modelled.
///
/// `Mixed` columns hold exact special values (and possibly missing cells) on
/// top of a continuous part; the special values are reproduced exactly on
/// decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous {
        #[serde(default)]
        log_transform: bool,
    },
    Categorical,
    Mixed {
        #[serde(default)]
        categorical_values: Vec<f64>,
        #[serde(default)]
        log_transform: bool,
    },
}

impl ColumnKind {
    pub fn is_numeric(&self) -> bool {
        !matches!(self, ColumnKind::Categorical)
    }

    pub fn log_transform(&self) -> bool {
        match self {
            ColumnKind::Continuous { log_transform } | ColumnKind::Mixed { log_transform, .. } => {
                *log_transform
            }
            ColumnKind::Categorical => false,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ColumnKind::Continuous { .. } => "continuous",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Mixed { .. } => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default = "default_true")]
    pub include: bool,
    #[serde(default)]
    pub target: bool,
}

fn default_true() -> bool {
    true
}

impl ColumnSpec {
    /// An included, non-target column.
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind,
            include: true,
            target: false,
        }
    }
}

/// Ordered column descriptors shared by encoding, training and decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let schema = Schema { columns };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for c in &self.columns {
            if !names.insert(c.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate column `{}`",
                    c.name
                )));
            }
            if let ColumnKind::Mixed {
                categorical_values, ..
            } = &c.kind
            {
                let mut seen = Vec::<f64>::new();
                for v in categorical_values {
                    if !v.is_finite() {
                        return Err(Error::InvalidSchema(format!(
                            "column `{}`: non-finite categorical value",
                            c.name
                        )));
                    }
                    if seen.contains(v) {
                        return Err(Error::InvalidSchema(format!(
                            "column `{}`: duplicate categorical value {v}",
                            c.name
                        )));
                    }
                    seen.push(*v);
                }
            }
        }
        let targets: Vec<&ColumnSpec> = self.columns.iter().filter(|c| c.target).collect();
        if targets.len() > 1 {
            return Err(Error::InvalidSchema("more than one target column".into()));
        }
        if let Some(t) = targets.first() {
            if !t.include {
                return Err(Error::InvalidSchema(format!(
                    "target column `{}` cannot be excluded",
                    t.name
                )));
            }
        }
        if self.n_included() == 0 {
            return Err(Error::InvalidSchema("no included columns".into()));
        }
        Ok(())
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn included(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.include)
    }

    /// Included columns in encoding order: continuous and mixed first, then
    /// categorical, each group in raw column order.
    pub fn encoding_order(&self) -> Vec<&ColumnSpec> {
        let numeric = self.included().filter(|c| c.kind.is_numeric());
        let categorical = self.included().filter(|c| !c.kind.is_numeric());
        numeric.chain(categorical).collect()
    }

    /// N, the number of included columns.
    pub fn n_included(&self) -> usize {
        self.included().count()
    }

    /// n, included continuous and mixed columns.
    pub fn n_numeric(&self) -> usize {
        self.included().filter(|c| c.kind.is_numeric()).count()
    }

    /// m, included categorical columns.
    pub fn n_categorical(&self) -> usize {
        self.included().filter(|c| !c.kind.is_numeric()).count()
    }

    pub fn target(&self) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.target)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Schema = serde_json::from_str(text)?;
        raw.validate()?;
        Ok(raw)
    }

    /// Checks that every included column exists in `table` and that numeric
    /// kinds only see numeric tokens.
    pub fn check_table(&self, table: &Table) -> Result<()> {
        for spec in self.included() {
            let col = table.column(&spec.name)?;
            if spec.kind.is_numeric() {
                if let Some(bad) = col
                    .tokens()
                    .iter()
                    .zip(col.numbers())
                    .find_map(|(t, n)| t.as_ref().filter(|_| n.is_none()))
                {
                    return Err(Error::NotNumeric {
                        column: spec.name.clone(),
                        token: bad.clone(),
                    });
                }
                if matches!(spec.kind, ColumnKind::Continuous { .. }) && col.missing_count() > 0 {
                    return Err(Error::InvalidSchema(format!(
                        "continuous column `{}` has missing values; declare it mixed",
                        spec.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// A human-readable listing, one column per line.
    pub fn listing(&self) -> String {
        let width = self
            .columns
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(4)
            .max(4);
        let mut out = format!("{:<width$}  {:<12}  include  notes\n", "name", "kind");
        for c in &self.columns {
            let mut notes = Vec::new();
            if c.target {
                notes.push("target".to_string());
            }
            if c.kind.log_transform() {
                notes.push("log".to_string());
            }
            if let ColumnKind::Mixed {
                categorical_values, ..
            } = &c.kind
            {
                if !categorical_values.is_empty() {
                    notes.push(format!("values={categorical_values:?}"));
                }
            }
            out.push_str(&format!(
                "{:<width$}  {:<12}  {:<7}  {}\n",
                c.name,
                c.kind.label(),
                if c.include { "yes" } else { "no" },
                notes.join(" ")
            ));
        }
        out
    }
}

/// Auto-detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferOptions {
    /// A numeric column with at most this many distinct values is categorical.
    pub max_categories: usize,
    /// A single value holding at least this fraction of present cells is a
    /// categorical spike of a mixed column.
    pub spike_fraction: f64,
    /// Columns with sample skewness above this get the log transform.
    pub skew_threshold: f64,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            max_categories: 25,
            spike_fraction: 0.2,
            skew_threshold: 10.0,
        }
    }
}

pub fn infer_schema(table: &Table) -> Result<Schema> {
    infer_schema_with(table, &InferOptions::default())
}

pub fn infer_schema_with(table: &Table, options: &InferOptions) -> Result<Schema> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    let columns = table
        .columns()
        .iter()
        .map(|c| ColumnSpec {
            name: c.name().to_string(),
            kind: infer_kind(c, options),
            include: true,
            target: false,
        })
        .collect();
    Schema::new(columns)
}

fn infer_kind(column: &Column, options: &InferOptions) -> ColumnKind {
    if !column.all_numeric() {
        return ColumnKind::Categorical;
    }
    let values: Vec<f64> = column.numbers().iter().flatten().copied().collect();
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for v in &values {
        *counts.entry(canonical_bits(*v)).or_default() += 1;
    }
    if values.is_empty() || counts.len() <= options.max_categories {
        return ColumnKind::Categorical;
    }
    let present = values.len() as f64;
    let mut spikes: Vec<f64> = counts
        .iter()
        .filter(|(_, &n)| n as f64 >= options.spike_fraction * present)
        .map(|(&bits, _)| f64::from_bits(bits))
        .collect();
    spikes.sort_by(f64::total_cmp);
    let remainder: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| !spikes.contains(v))
        .collect();
    let log_transform = skewness(&remainder).is_some_and(|s| s > options.skew_threshold);
    if spikes.is_empty() && column.missing_count() == 0 {
        ColumnKind::Continuous { log_transform }
    } else {
        ColumnKind::Mixed {
            categorical_values: spikes,
            log_transform,
        }
    }
}

fn canonical_bits(v: f64) -> u64 {
    // -0.0 and 0.0 are the same spike.
    if v == 0.0 {
        0.0f64.to_bits()
    } else {
        v.to_bits()
    }
}

fn skewness(values: &[f64]) -> Option<f64> {
    let n = values.len() as f64;
    if values.len() < 3 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    (m2 > 0.0).then(|| m3 / m2.powf(1.5))
}

/// A user adjustment to one column.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ColumnOverride {
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ColumnKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<bool>,
}

/// The JSON override document: `{"overrides": [ ... ]}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OverrideDocument {
    #[serde(default)]
    pub overrides: Vec<ColumnOverride>,
}

impl OverrideDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Applies overrides in order. Setting `target` on a column clears it on
/// every other column.
pub fn apply_overrides(schema: &Schema, overrides: &[ColumnOverride]) -> Result<Schema> {
    let mut columns = schema.columns.clone();
    for ov in overrides {
        let idx = columns
            .iter()
            .position(|c| c.name == ov.column)
            .ok_or_else(|| Error::UnknownColumn(ov.column.clone()))?;
        if let Some(kind) = &ov.kind {
            columns[idx].kind = kind.clone();
        }
        if let Some(target) = ov.target {
            if target {
                for c in columns.iter_mut() {
                    c.target = false;
                }
            }
            columns[idx].target = target;
        }
        if let Some(include) = ov.include {
            if !include && columns[idx].target {
                return Err(Error::InvalidSchema(format!(
                    "cannot exclude target column `{}`",
                    ov.column
                )));
            }
            columns[idx].include = include;
        }
    }
    Schema::new(columns)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[default]
    None,
    Binary,
    Multiclass,
}

/// Which column is the label and what kind of problem it poses.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TargetSpec {
    pub problem: ProblemKind,
    #[serde(default)]
    pub column: Option<String>,
}

impl TargetSpec {
    pub fn none() -> Self {
        TargetSpec::default()
    }

    pub fn binary(column: impl Into<String>) -> Self {
        TargetSpec {
            problem: ProblemKind::Binary,
            column: Some(column.into()),
        }
    }

    pub fn multiclass(column: impl Into<String>) -> Self {
        TargetSpec {
            problem: ProblemKind::Multiclass,
            column: Some(column.into()),
        }
    }

    pub fn is_none(&self) -> bool {
        self.problem == ProblemKind::None
    }

    /// The target column name, required unless the problem kind is none.
    pub fn column_name(&self) -> Result<Option<&str>> {
        match (self.problem, self.column.as_deref()) {
            (ProblemKind::None, _) => Ok(None),
            (_, Some(c)) => Ok(Some(c)),
            (_, None) => Err(Error::InvalidTarget(
                "problem kind needs a target column".into(),
            )),
        }
    }

    /// Checks the class-count invariant against a table.
    pub fn validate(&self, table: &Table) -> Result<()> {
        let Some(name) = self.column_name()? else {
            return Ok(());
        };
        let col = table.column(name)?;
        let classes: HashSet<&str> = col.tokens().iter().flatten().map(String::as_str).collect();
        match self.problem {
            ProblemKind::Binary if classes.len() != 2 => Err(Error::InvalidTarget(format!(
                "binary target `{name}` has {} classes",
                classes.len()
            ))),
            ProblemKind::Multiclass if classes.len() < 3 => Err(Error::InvalidTarget(format!(
                "multiclass target `{name}` has {} classes",
                classes.len()
            ))),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::table::Column;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn num_col(name: &str, v: Vec<Option<f64>>) -> Column {
        Column::from_numbers(name, v)
    }

    #[test]
    fn non_numeric_is_categorical() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tokens = (0..50_000)
            .map(|_| {
                Some(
                    if rng.random_bool(0.6) {
                        "male"
                    } else {
                        "female"
                    }
                    .to_string(),
                )
            })
            .collect();
        let t = Table::new(vec![Column::new("sex", tokens)]).unwrap();
        let s = infer_schema(&t).unwrap();
        assert_eq!(s.columns()[0].kind, ColumnKind::Categorical);
    }

    #[test]
    fn spike_at_zero_is_mixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = (0..5000)
            .map(|_| {
                Some(if rng.random_bool(0.7) {
                    0.0
                } else {
                    50.0 + 200.0 * rng.random::<f64>()
                })
            })
            .collect();
        let t = Table::new(vec![num_col("mortgage", v)]).unwrap();
        let s = infer_schema(&t).unwrap();
        assert_eq!(
            s.columns()[0].kind,
            ColumnKind::Mixed {
                categorical_values: vec![0.0],
                log_transform: false
            }
        );
    }

    #[test]
    fn distinct_floats_are_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = (0..10_000).map(|_| Some(rng.random::<f64>())).collect();
        let t = Table::new(vec![num_col("x", v)]).unwrap();
        let s = infer_schema(&t).unwrap();
        assert_eq!(
            s.columns()[0].kind,
            ColumnKind::Continuous {
                log_transform: false
            }
        );
    }

    #[test]
    fn few_numeric_levels_are_categorical() {
        let v = (0..1000).map(|i| Some((i % 7) as f64)).collect();
        let t = Table::new(vec![num_col("edu", v)]).unwrap();
        assert_eq!(
            infer_schema(&t).unwrap().columns()[0].kind,
            ColumnKind::Categorical
        );
    }

    #[test]
    fn continuous_with_missing_is_promoted() {
        let v = (0..1000)
            .map(|i| {
                if i % 10 == 0 {
                    None
                } else {
                    Some(i as f64 * 0.37)
                }
            })
            .collect();
        let t = Table::new(vec![num_col("x", v)]).unwrap();
        match &infer_schema(&t).unwrap().columns()[0].kind {
            ColumnKind::Mixed {
                categorical_values, ..
            } => assert!(categorical_values.is_empty()),
            k => panic!("expected mixed, got {k:?}"),
        }
    }

    #[test]
    fn heavy_tail_gets_log_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = (0..5000)
            .map(|_| {
                let u: f64 = rng.random();
                Some(if u < 0.001 {
                    1e7 * u.max(1e-4) * 1000.0
                } else {
                    1.0 + 10.0 * u
                })
            })
            .collect();
        let t = Table::new(vec![num_col("amount", v)]).unwrap();
        assert!(infer_schema(&t).unwrap().columns()[0].kind.log_transform());
    }

    #[test]
    fn empty_table_errors() {
        let t = Table::new(vec![Column::new("a", vec![])]).unwrap();
        assert!(matches!(infer_schema(&t), Err(Error::EmptyTable)));
    }

    fn five_col_schema() -> Schema {
        Schema::new(
            ["a", "b", "c", "d", "e"]
                .iter()
                .map(|n| ColumnSpec {
                    name: n.to_string(),
                    kind: ColumnKind::Continuous {
                        log_transform: false,
                    },
                    include: true,
                    target: false,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn exclude_reduces_width() {
        let s = apply_overrides(
            &five_col_schema(),
            &[ColumnOverride {
                column: "c".into(),
                include: Some(false),
                ..Default::default()
            }],
        )
        .unwrap();
        assert_eq!(s.n_included(), 4);
        assert_eq!(s.n_numeric() + s.n_categorical(), 4);
    }

    #[test]
    fn kind_override_replaces() {
        let mixed = ColumnKind::Mixed {
            categorical_values: vec![0.0],
            log_transform: false,
        };
        let s = apply_overrides(
            &five_col_schema(),
            &[ColumnOverride {
                column: "b".into(),
                kind: Some(mixed.clone()),
                ..Default::default()
            }],
        )
        .unwrap();
        assert_eq!(s.column("b").unwrap().kind, mixed);
    }

    #[test]
    fn unknown_override_errors() {
        let err = apply_overrides(
            &five_col_schema(),
            &[ColumnOverride {
                column: "zzz".into(),
                include: Some(false),
                ..Default::default()
            }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownColumn(c) if c == "zzz"));
    }

    #[test]
    fn excluding_target_errors() {
        let s = apply_overrides(
            &five_col_schema(),
            &[ColumnOverride {
                column: "e".into(),
                kind: Some(ColumnKind::Categorical),
                target: Some(true),
                ..Default::default()
            }],
        )
        .unwrap();
        assert_eq!(s.target().unwrap().name, "e");
        let err = apply_overrides(
            &s,
            &[ColumnOverride {
                column: "e".into(),
                include: Some(false),
                ..Default::default()
            }],
        );
        assert!(err.is_err());
    }

    #[test]
    fn retargeting_moves_flag() {
        let s = five_col_schema();
        let s = apply_overrides(
            &s,
            &[
                ColumnOverride {
                    column: "a".into(),
                    target: Some(true),
                    ..Default::default()
                },
                ColumnOverride {
                    column: "b".into(),
                    target: Some(true),
                    ..Default::default()
                },
            ],
        )
        .unwrap();
        assert_eq!(s.columns().iter().filter(|c| c.target).count(), 1);
        assert_eq!(s.target().unwrap().name, "b");
    }

    #[test]
    fn encoding_order_puts_numeric_first() {
        let s = Schema::new(vec![
            ColumnSpec {
                name: "cat".into(),
                kind: ColumnKind::Categorical,
                include: true,
                target: false,
            },
            ColumnSpec {
                name: "num".into(),
                kind: ColumnKind::Continuous {
                    log_transform: false,
                },
                include: true,
                target: false,
            },
        ])
        .unwrap();
        let order: Vec<&str> = s.encoding_order().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(order, ["num", "cat"]);
    }

    #[test]
    fn override_document_parses() {
        let doc = OverrideDocument::from_json(
            r#"{"overrides":[{"column":"m","kind":{"type":"mixed","categorical_values":[0]}},
                {"column":"x","include":false}]}"#,
        )
        .unwrap();
        assert_eq!(doc.overrides.len(), 2);
        assert_eq!(
            doc.overrides[0].kind,
            Some(ColumnKind::Mixed {
                categorical_values: vec![0.0],
                log_transform: false
            })
        );
    }

    #[test]
    fn target_class_counts_checked() {
        let t = Table::new(vec![Column::new(
            "y",
            ["a", "b", "c"]
                .iter()
                .map(|s| Some(s.to_string()))
                .collect(),
        )])
        .unwrap();
        assert!(TargetSpec::binary("y").validate(&t).is_err());
        assert!(TargetSpec::multiclass("y").validate(&t).is_ok());
    }

    #[test]
    fn inference_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<Option<f64>> = (0..2000)
            .map(|_| Some(rng.random::<f64>() * 100.0))
            .collect();
        let t = Table::new(vec![num_col("x", v)]).unwrap();
        assert_eq!(infer_schema(&t).unwrap(), infer_schema(&t).unwrap());
    }
}
