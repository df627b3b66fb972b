//! Conditional vectors and training-by-sampling.
//!
//! A condition selects one mode (continuous and mixed columns) or one class
//! (categorical columns). Conditions are drawn by picking a column uniformly
//! and then a mode or class with probability proportional to `ln(1 + count)`,
//! which lifts rare modes relative to their raw frequency. The same condition
//! filters the real rows the discriminator sees.

use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::{argmax, hard_index, EncodingLayout};

/// One conditionable column: where its one-hot sits in an encoded row and
/// where its bits sit in the conditional vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondSegment {
    /// Column position in encoding order.
    pub column: usize,
    pub encoded_offset: usize,
    pub cond_offset: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    segments: Vec<CondSegment>,
    counts: Vec<Vec<u64>>,
    masses: Vec<Vec<f64>>,
    width: usize,
}

/// A single selected mode or class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalVector {
    /// Index into [`FrequencyTable::segments`].
    pub segment: usize,
    /// Mode or class within that segment.
    pub local: usize,
}

impl FrequencyTable {
    /// Counts modes and classes in real encoded rows.
    pub fn build(encoded: &Array2<f64>, layout: &EncodingLayout) -> Result<Self> {
        if encoded.ncols() != layout.width() {
            return Err(Error::Shape(format!(
                "encoded width {} != layout width {}",
                encoded.ncols(),
                layout.width()
            )));
        }
        let mut segments = Vec::new();
        let mut cond_offset = 0;
        for seg in layout.one_hot_segments() {
            segments.push(CondSegment {
                column: seg.column,
                encoded_offset: seg.offset,
                cond_offset,
                width: seg.width,
            });
            cond_offset += seg.width;
        }
        let mut counts: Vec<Vec<u64>> = segments.iter().map(|s| vec![0; s.width]).collect();
        for row in encoded.outer_iter() {
            for (s, c) in segments.iter().zip(counts.iter_mut()) {
                let hot =
                    argmax(row.slice(ndarray::s![s.encoded_offset..s.encoded_offset + s.width]));
                c[hot] += 1;
            }
        }
        Ok(Self::from_counts(segments, counts, cond_offset))
    }

    fn from_counts(segments: Vec<CondSegment>, counts: Vec<Vec<u64>>, width: usize) -> Self {
        let masses = counts.iter().map(|c| log_masses(c)).collect();
        FrequencyTable {
            segments,
            counts,
            masses,
            width,
        }
    }

    /// Total conditional-vector width.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn segments(&self) -> &[CondSegment] {
        &self.segments
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Sampling masses per segment; each sums to one.
    pub fn masses(&self) -> &[Vec<f64>] {
        &self.masses
    }

    /// Segment index for an encoding-order column position.
    pub fn segment_of_column(&self, column: usize) -> Option<usize> {
        self.segments.iter().position(|s| s.column == column)
    }

    fn sampleable(&self) -> Vec<usize> {
        (0..self.segments.len())
            .filter(|&i| self.masses[i].iter().any(|&m| m > 0.0))
            .collect()
    }

    /// Draws a column uniformly, then a mode or class by log-frequency mass.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ConditionalVector> {
        let candidates = self.sampleable();
        if candidates.is_empty() {
            return Err(Error::InvalidArgument(
                "no column with observed modes or classes to condition on".into(),
            ));
        }
        let segment = candidates[rng.random_range(0..candidates.len())];
        let local = WeightedIndex::new(&self.masses[segment])
            .expect("segment has positive mass")
            .sample(rng);
        Ok(ConditionalVector { segment, local })
    }

    /// Draws a column uniformly, then a mode or class by its observed
    /// frequency. Used at synthesis time so generated marginals follow the
    /// data rather than the lifted training distribution.
    pub fn sample_empirical<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ConditionalVector> {
        let candidates = self.sampleable();
        if candidates.is_empty() {
            return Err(Error::InvalidArgument(
                "no column with observed modes or classes to condition on".into(),
            ));
        }
        let segment = candidates[rng.random_range(0..candidates.len())];
        let local = WeightedIndex::new(&self.counts[segment])
            .expect("segment has positive count")
            .sample(rng);
        Ok(ConditionalVector { segment, local })
    }

    /// A condition on a specific column position and mode/class index.
    pub fn condition(&self, column: usize, local: usize) -> Result<ConditionalVector> {
        let segment = self.segment_of_column(column).ok_or_else(|| {
            Error::InvalidArgument(format!("column {column} is not conditionable"))
        })?;
        if local >= self.segments[segment].width {
            return Err(Error::InvalidArgument(format!(
                "index {local} outside segment of width {}",
                self.segments[segment].width
            )));
        }
        Ok(ConditionalVector { segment, local })
    }

    /// The condition a real row satisfies for the given segment.
    pub fn condition_of_row(
        &self,
        row: ArrayView1<f64>,
        segment: usize,
    ) -> Result<ConditionalVector> {
        let s = self
            .segments
            .get(segment)
            .ok_or_else(|| Error::InvalidArgument(format!("no segment {segment}")))?;
        Ok(ConditionalVector {
            segment,
            local: hard_index(row, s.encoded_offset, s.width)?,
        })
    }

    /// Global bit position of a condition.
    pub fn bit(&self, cond: &ConditionalVector) -> usize {
        self.segments[cond.segment].cond_offset + cond.local
    }

    /// Writes the dense 0/1 vector into `out` (length [`width`](Self::width)).
    pub fn write_bits(&self, cond: &ConditionalVector, mut out: ArrayViewMut1<f64>) {
        out.fill(0.0);
        out[self.bit(cond)] = 1.0;
    }

    pub fn to_bits(&self, cond: &ConditionalVector) -> Vec<f64> {
        let mut v = vec![0.0; self.width];
        v[self.bit(cond)] = 1.0;
        v
    }
}

/// `ln(1 + count)` normalized to sum to one; all-zero counts give zeros.
pub fn log_masses(counts: &[u64]) -> Vec<f64> {
    let raw: Vec<f64> = counts.iter().map(|&c| (c as f64).ln_1p()).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|r| r / total).collect()
    } else {
        raw
    }
}

/// Row indices of the real data grouped by the mode/class they hold.
#[derive(Debug, Clone)]
pub struct RowIndex {
    rows: Vec<Vec<Vec<usize>>>,
}

impl RowIndex {
    pub fn build(encoded: &Array2<f64>, freq: &FrequencyTable) -> Self {
        let mut rows: Vec<Vec<Vec<usize>>> = freq
            .segments
            .iter()
            .map(|s| vec![Vec::new(); s.width])
            .collect();
        for (r, row) in encoded.outer_iter().enumerate() {
            for (i, s) in freq.segments.iter().enumerate() {
                let hot =
                    argmax(row.slice(ndarray::s![s.encoded_offset..s.encoded_offset + s.width]));
                rows[i][hot].push(r);
            }
        }
        RowIndex { rows }
    }

    pub fn matching(&self, cond: &ConditionalVector) -> &[usize] {
        &self.rows[cond.segment][cond.local]
    }

    /// Uniform draws, with replacement, among rows satisfying `cond`.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        cond: &ConditionalVector,
        rng: &mut R,
        batch: usize,
    ) -> Result<Vec<usize>> {
        let pool = self.matching(cond);
        if pool.is_empty() {
            return Err(Error::InvalidArgument(
                "no real row satisfies the condition".into(),
            ));
        }
        Ok((0..batch)
            .map(|_| pool[rng.random_range(0..pool.len())])
            .collect())
    }
}
