use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use super::codec::{CategoricalCodec, Cell, CodecConfig, ColumnCodec, NumericCodec};
use super::layout::{EncodingLayout, SegmentKind};
use crate::data::{format_number, Column, Schema, Table};
use crate::error::{Error, Result};

pub const CODEC_BUNDLE_VERSION: u32 = 1;

/// Fitted codecs for every included column plus the row layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableTransformer {
    schema: Schema,
    /// Codecs in encoding order.
    codecs: Vec<ColumnCodec>,
    layout: EncodingLayout,
}

#[derive(Serialize, Deserialize)]
struct CodecBundle {
    version: u32,
    #[serde(flatten)]
    transformer: TableTransformer,
}

impl TableTransformer {
    pub fn fit(table: &Table, schema: &Schema, config: &CodecConfig) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::EmptyTable);
        }
        schema.check_table(table)?;
        let codecs = schema
            .encoding_order()
            .into_iter()
            .map(|spec| {
                let col = table.column(&spec.name)?;
                Ok(if spec.kind.is_numeric() {
                    ColumnCodec::Numeric(NumericCodec::fit(
                        &spec.name,
                        &spec.kind,
                        col.numbers(),
                        config,
                    )?)
                } else {
                    ColumnCodec::Categorical(CategoricalCodec::fit(&spec.name, col.tokens()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let layout = EncodingLayout::new(
            &codecs
                .iter()
                .map(|c| (c.is_numeric(), c.one_hot_width()))
                .collect::<Vec<_>>(),
        );
        Ok(TableTransformer {
            schema: schema.clone(),
            codecs,
            layout,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn codecs(&self) -> &[ColumnCodec] {
        &self.codecs
    }

    pub fn layout(&self) -> &EncodingLayout {
        &self.layout
    }

    /// Encoding-order position of a column.
    pub fn column_position(&self, name: &str) -> Option<usize> {
        self.codecs.iter().position(|c| c.name() == name)
    }

    pub fn encode_table(&self, table: &Table) -> Result<Array2<f64>> {
        let n = table.n_rows();
        let mut out = Array2::<f64>::zeros((n, self.layout.width()));
        for (pos, codec) in self.codecs.iter().enumerate() {
            let col = table.column(codec.name())?;
            match codec {
                ColumnCodec::Numeric(c) => {
                    let alpha = self
                        .layout
                        .alpha_of(pos)
                        .expect("numeric column has α")
                        .offset;
                    let mode = self.layout.one_hot_of(pos).map(|s| s.offset);
                    for r in 0..n {
                        if col.number(r).is_none() && !col.is_missing(r) {
                            return Err(Error::NotNumeric {
                                column: c.name.clone(),
                                token: col.token(r).unwrap_or_default().to_string(),
                            });
                        }
                        let (a, slot) = c.encode(col.number(r))?;
                        out[[r, alpha]] = a;
                        if let (Some(offset), Some(slot)) = (mode, slot) {
                            out[[r, offset + slot]] = 1.0;
                        }
                    }
                }
                ColumnCodec::Categorical(c) => {
                    let offset = self.layout.one_hot_of(pos).expect("class segment").offset;
                    for r in 0..n {
                        out[[r, offset + c.encode(col.token(r))?]] = 1.0;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Replaces every one-hot segment with the one-hot of its argmax.
    pub fn harden(&self, mut row: ArrayViewMut1<f64>) {
        for seg in self.layout.one_hot_segments() {
            let best = argmax(row.slice(ndarray::s![seg.range()]));
            for j in seg.range() {
                row[j] = 0.0;
            }
            row[seg.offset + best] = 1.0;
        }
    }

    /// Decodes one hard-encoded row into cells, in encoding order.
    pub fn decode_row(&self, row: ArrayView1<f64>) -> Result<Vec<Cell>> {
        if row.len() != self.layout.width() {
            return Err(Error::Shape(format!(
                "row width {} != layout width {}",
                row.len(),
                self.layout.width()
            )));
        }
        let mut alpha = vec![0.0; self.codecs.len()];
        let mut hot: Vec<Option<usize>> = vec![None; self.codecs.len()];
        for seg in self.layout.segments() {
            match seg.kind {
                SegmentKind::Alpha => alpha[seg.column] = row[seg.offset],
                SegmentKind::Mode | SegmentKind::Class => {
                    hot[seg.column] = Some(hard_index(row, seg.offset, seg.width)?);
                }
            }
        }
        self.codecs
            .iter()
            .enumerate()
            .map(|(pos, codec)| match codec {
                ColumnCodec::Numeric(c) => Ok(match c.decode(alpha[pos], hot[pos])? {
                    Some(v) => Cell::Number(v),
                    None => Cell::Missing,
                }),
                ColumnCodec::Categorical(c) => c.decode(hot[pos].expect("class segment")),
            })
            .collect()
    }

    /// Decodes hard-encoded rows into a table whose columns follow the
    /// schema's raw order.
    pub fn decode_matrix(&self, rows: &Array2<f64>) -> Result<Table> {
        let decoded = rows
            .outer_iter()
            .map(|r| self.decode_row(r))
            .collect::<Result<Vec<_>>>()?;
        let mut columns = Vec::with_capacity(self.codecs.len());
        for spec in self.schema.included() {
            let pos = self
                .column_position(&spec.name)
                .expect("codec for every included column");
            let col = if self.codecs[pos].is_numeric() {
                Column::from_numbers(
                    &spec.name,
                    decoded
                        .iter()
                        .map(|cells| match &cells[pos] {
                            Cell::Number(v) => Some(*v),
                            _ => None,
                        })
                        .collect(),
                )
            } else {
                Column::new(
                    &spec.name,
                    decoded
                        .iter()
                        .map(|cells| match &cells[pos] {
                            Cell::Category(s) => Some(s.clone()),
                            Cell::Number(v) => Some(format_number(*v)),
                            Cell::Missing => None,
                        })
                        .collect(),
                )
            };
            columns.push(col);
        }
        Table::new(columns)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CodecBundle {
            version: CODEC_BUNDLE_VERSION,
            transformer: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: CodecBundle = serde_json::from_str(text)?;
        if bundle.version != CODEC_BUNDLE_VERSION {
            return Err(Error::Version {
                found: bundle.version,
                expected: CODEC_BUNDLE_VERSION,
            });
        }
        Ok(bundle.transformer)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub(crate) fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the single 1 in `row[offset..offset+width]`.
pub(crate) fn hard_index(row: ArrayView1<f64>, offset: usize, width: usize) -> Result<usize> {
    let mut hot = None;
    for j in 0..width {
        let v = row[offset + j];
        if v == 1.0 {
            if hot.is_some() {
                return Err(Error::NotOneHot { offset });
            }
            hot = Some(j);
        } else if v != 0.0 {
            return Err(Error::NotOneHot { offset });
        }
    }
    hot.ok_or(Error::NotOneHot { offset })
}
