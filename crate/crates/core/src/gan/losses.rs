use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{logsumexp, sigmoid, softmax};

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Adversarial losses and their gradients with respect to the discriminator
/// logits. Gradients are already divided by the batch size.
#[derive(Debug, Clone)]
pub struct AdvLosses {
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_grad_real: Array1<f64>,
    pub d_grad_fake: Array1<f64>,
    pub g_grad_fake: Array1<f64>,
}

/// Non-saturating GAN losses from logits:
/// `d = −E[ln D(real)] − E[ln(1 − D(fake))]`, `g = −E[ln D(fake)]`.
pub fn adv_losses(real_logits: &[f64], fake_logits: &[f64]) -> Result<AdvLosses> {
    if real_logits.is_empty() || fake_logits.is_empty() {
        return Err(Error::Shape("empty logit batch".into()));
    }
    let nr = real_logits.len() as f64;
    let nf = fake_logits.len() as f64;
    let d_real: f64 = real_logits.iter().map(|&r| softplus(-r)).sum::<f64>() / nr;
    let d_fake: f64 = fake_logits.iter().map(|&f| softplus(f)).sum::<f64>() / nf;
    let g_loss = fake_logits.iter().map(|&f| softplus(-f)).sum::<f64>() / nf;
    let d_loss = d_real + d_fake;
    if !d_loss.is_finite() || !g_loss.is_finite() {
        return Err(Error::NonFinite("adversarial loss".into()));
    }
    Ok(AdvLosses {
        d_loss,
        g_loss,
        d_grad_real: real_logits
            .iter()
            .map(|&r| (sigmoid(r) - 1.0) / nr)
            .collect(),
        d_grad_fake: fake_logits.iter().map(|&f| sigmoid(f) / nf).collect(),
        g_grad_fake: fake_logits
            .iter()
            .map(|&f| (sigmoid(f) - 1.0) / nf)
            .collect(),
    })
}

/// Generator side alone: `−E[ln D(fake)]` and its gradient.
pub fn generator_adv_loss(fake_logits: &[f64]) -> Result<(f64, Array1<f64>)> {
    if fake_logits.is_empty() {
        return Err(Error::Shape("empty logit batch".into()));
    }
    let n = fake_logits.len() as f64;
    let loss = fake_logits.iter().map(|&f| softplus(-f)).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("adversarial loss".into()));
    }
    Ok((
        loss,
        fake_logits
            .iter()
            .map(|&f| (sigmoid(f) - 1.0) / n)
            .collect(),
    ))
}

/// Per-feature mean and population standard deviation of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl FeatureStats {
    pub fn of(batch: &Array2<f64>) -> Result<Self> {
        if batch.nrows() == 0 {
            return Err(Error::Shape("feature statistics of an empty batch".into()));
        }
        let mean = batch.mean_axis(Axis(0)).expect("non-empty");
        let std = batch.var_axis(Axis(0), 0.0).mapv(f64::sqrt);
        Ok(FeatureStats { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }
}

/// `‖mean_real − mean_fake‖₂ + ‖sd_real − sd_fake‖₂`.
pub fn info_loss(real: &FeatureStats, fake: &FeatureStats) -> Result<f64> {
    if real.width() != fake.width() {
        return Err(Error::Shape(format!(
            "feature widths {} and {} differ",
            real.width(),
            fake.width()
        )));
    }
    let dm = (&real.mean - &fake.mean).mapv(|v| v * v).sum().sqrt();
    let ds = (&real.std - &fake.std).mapv(|v| v * v).sum().sqrt();
    Ok(dm + ds)
}

/// Information loss with the real statistics held fixed, and its gradient
/// with respect to every entry of the fake feature batch.
pub fn info_loss_grad(real: &FeatureStats, fake_batch: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    let fake = FeatureStats::of(fake_batch)?;
    let loss = info_loss(real, &fake)?;
    let n = fake_batch.nrows() as f64;
    let dmean = &real.mean - &fake.mean;
    let dstd = &real.std - &fake.std;
    let nm = dmean.mapv(|v| v * v).sum().sqrt();
    let ns = dstd.mapv(|v| v * v).sum().sqrt();
    let mut grad = Array2::zeros(fake_batch.dim());
    for ((i, j), g) in grad.indexed_iter_mut() {
        let mut v = 0.0;
        if nm > 0.0 {
            v -= dmean[j] / nm / n;
        }
        if ns > 0.0 && fake.std[j] > 0.0 {
            v -= dstd[j] / ns * (fake_batch[[i, j]] - fake.mean[j]) / (n * fake.std[j]);
        }
        *g = v;
    }
    Ok((loss, grad))
}

/// Mean softmax cross-entropy of `logits` against class indices, with the
/// gradient with respect to the logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() || logits.nrows() == 0 {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let n = labels.len() as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut total = 0.0;
    for (r, (row, &label)) in logits.outer_iter().zip(labels).enumerate() {
        if label >= row.len() {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range"
            )));
        }
        let z = row.to_vec();
        total += logsumexp(&z) - z[label];
        for (k, p) in softmax(&z).into_iter().enumerate() {
            grad[[r, k]] = (p - if k == label { 1.0 } else { 0.0 }) / n;
        }
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy".into()));
    }
    Ok((loss, grad))
}
