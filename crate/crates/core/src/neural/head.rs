use ndarray::{s, Array2, ArrayView1, ArrayViewMut1};
use rand::Rng;
use rand_distr::{Distribution, Gumbel};

use crate::error::{Error, Result};
use crate::transform::{EncodingLayout, Segment, SegmentKind};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;

/// Gumbel-softmax relaxation of a categorical draw.
pub fn gumbel_softmax<R: Rng + ?Sized>(logits: &[f64], temperature: f64, rng: &mut R) -> Vec<f64> {
    let gumbel = Gumbel::new(0.0, 1.0).expect("unit gumbel");
    let z: Vec<f64> = logits
        .iter()
        .map(|l| (l + gumbel.sample(rng)) / temperature)
        .collect();
    softmax(&z)
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

pub fn logsumexp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Maps the generator's raw outputs to encoded rows: `tanh` on every α and a
/// Gumbel-softmax on every mode or class segment.
#[derive(Debug, Clone)]
pub struct OutputHead {
    segments: Vec<Segment>,
    width: usize,
    temperature: f64,
}

/// What [`OutputHead::backward`] and [`OutputHead::cond_loss`] need from a
/// forward pass.
#[derive(Debug, Clone)]
pub struct HeadCache {
    output: Array2<f64>,
    /// Perturbed, temperature-scaled logits; zero in α columns.
    scaled: Array2<f64>,
}

impl HeadCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn scaled_logits(&self) -> &Array2<f64> {
        &self.scaled
    }
}

impl OutputHead {
    pub fn new(layout: &EncodingLayout, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(OutputHead {
            segments: layout.segments().to_vec(),
            width: layout.width(),
            temperature,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn forward<R: Rng + ?Sized>(&self, raw: &Array2<f64>, rng: &mut R) -> Result<HeadCache> {
        if raw.ncols() != self.width {
            return Err(Error::Shape(format!(
                "head expects {} columns, got {}",
                self.width,
                raw.ncols()
            )));
        }
        let gumbel = Gumbel::new(0.0, 1.0).expect("unit gumbel");
        let mut output = Array2::zeros(raw.dim());
        let mut scaled = Array2::zeros(raw.dim());
        for (r, row) in raw.outer_iter().enumerate() {
            for seg in &self.segments {
                match seg.kind {
                    SegmentKind::Alpha => {
                        output[[r, seg.offset]] = row[seg.offset].tanh();
                    }
                    SegmentKind::Mode | SegmentKind::Class => {
                        let z: Vec<f64> = seg
                            .range()
                            .map(|j| (row[j] + gumbel.sample(rng)) / self.temperature)
                            .collect();
                        let y = softmax(&z);
                        for (k, j) in seg.range().enumerate() {
                            scaled[[r, j]] = z[k];
                            output[[r, j]] = y[k];
                        }
                    }
                }
            }
        }
        Ok(HeadCache { output, scaled })
    }

    /// Gradient with respect to the raw outputs given `dL/d output`.
    pub fn backward(&self, cache: &HeadCache, upstream: &Array2<f64>) -> Result<Array2<f64>> {
        if upstream.dim() != cache.output.dim() {
            return Err(Error::Shape("head gradient shape".into()));
        }
        let mut grad = Array2::zeros(upstream.dim());
        for r in 0..upstream.nrows() {
            let y = cache.output.row(r);
            let g = upstream.row(r);
            let mut out = grad.row_mut(r);
            for seg in &self.segments {
                match seg.kind {
                    SegmentKind::Alpha => {
                        let a = y[seg.offset];
                        out[seg.offset] = g[seg.offset] * (1.0 - a * a);
                    }
                    _ => self.softmax_backward(seg, y, g, &mut out),
                }
            }
        }
        Ok(grad)
    }

    fn softmax_backward(
        &self,
        seg: &Segment,
        y: ArrayView1<f64>,
        g: ArrayView1<f64>,
        out: &mut ArrayViewMut1<f64>,
    ) {
        let range = seg.range();
        let dot: f64 = range.clone().map(|j| y[j] * g[j]).sum();
        for j in range {
            out[j] = y[j] * (g[j] - dot) / self.temperature;
        }
    }

    /// Cross-entropy between the relaxed output of each row's conditioned
    /// segment and the requested index, averaged over rows. `conditions[r]`
    /// is `(encoded offset, width, local index)`. Returns the loss and its
    /// gradient with respect to the raw outputs.
    pub fn cond_loss(
        &self,
        cache: &HeadCache,
        conditions: &[(usize, usize, usize)],
    ) -> Result<(f64, Array2<f64>)> {
        let n = cache.output.nrows();
        if conditions.len() != n {
            return Err(Error::Shape(format!(
                "{} conditions for {} rows",
                conditions.len(),
                n
            )));
        }
        let mut grad = Array2::zeros(cache.output.dim());
        let mut total = 0.0;
        let scale = 1.0 / n as f64;
        for (r, &(offset, width, local)) in conditions.iter().enumerate() {
            if local >= width || offset + width > self.width {
                return Err(Error::Shape("condition outside the encoded row".into()));
            }
            let z = cache.scaled.slice(s![r, offset..offset + width]);
            let zs: Vec<f64> = z.to_vec();
            total += logsumexp(&zs) - zs[local];
            let p = softmax(&zs);
            for k in 0..width {
                let target = if k == local { 1.0 } else { 0.0 };
                grad[[r, offset + k]] = scale * (p[k] - target) / self.temperature;
            }
        }
        Ok((total * scale, grad))
    }
}
