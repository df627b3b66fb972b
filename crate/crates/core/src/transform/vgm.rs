//! Variational Bayesian Gaussian mixture for one-dimensional data.
//!
//! The model places a symmetric Dirichlet prior on the mixture weights and a
//! Normal-Gamma prior on each component's mean and precision. Coordinate
//! ascent alternates the usual responsibility update with the conjugate
//! posterior updates; components the data does not support drift towards the
//! prior weight and are pruned once fitting stops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VgmConfig {
    /// Components the fit starts from.
    pub max_modes: usize,
    /// Dirichlet concentration per component; `None` means `1 / max_modes`.
    pub weight_concentration: Option<f64>,
    pub max_iter: usize,
    /// Relative change of the bound below which fitting may stop.
    pub tol: f64,
    /// Largest per-iteration weight change below which fitting may stop.
    /// Redundant components lose weight long after the bound has flattened,
    /// so both criteria must hold.
    pub weight_tol: f64,
    /// Retained modes must carry at least this weight.
    pub prune_threshold: f64,
    /// Each σ is floored at this fraction of the column standard deviation.
    pub std_floor_ratio: f64,
    pub seed: u64,
}

impl Default for VgmConfig {
    fn default() -> Self {
        VgmConfig {
            max_modes: 10,
            weight_concentration: None,
            max_iter: 3000,
            tol: 1e-5,
            weight_tol: 1e-6,
            prune_threshold: 0.005,
            std_floor_ratio: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

impl Mode {
    /// `ln 𝒩(x; mean, std)`.
    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        -0.5 * (LN_2PI + z * z) - self.std.ln()
    }
}

/// How competing modes are compared when a value is assigned to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeWeighting {
    /// `ω_k · 𝒩(x; μ_k, σ_k)`, the posterior responsibility.
    #[default]
    Weighted,
    /// `𝒩(x; μ_k, σ_k)` alone.
    Unweighted,
}

/// Fitted modes, sorted by mean, weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureModel {
    modes: Vec<Mode>,
    /// Index of each retained mode among the components the fit started from.
    retained: Vec<usize>,
    iterations: usize,
    converged: bool,
}

impl GaussianMixtureModel {
    /// Builds a mixture from explicit modes; weights are renormalized and
    /// modes sorted by mean.
    pub fn from_modes(mut modes: Vec<Mode>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs at least one mode".into(),
            ));
        }
        if modes
            .iter()
            .any(|m| !(m.std > 0.0) || !(m.weight > 0.0) || !m.mean.is_finite())
        {
            return Err(Error::InvalidArgument(
                "mixture modes need finite means, positive weights and std".into(),
            ));
        }
        let total: f64 = modes.iter().map(|m| m.weight).sum();
        for m in &mut modes {
            m.weight /= total;
        }
        let mut order: Vec<usize> = (0..modes.len()).collect();
        order.sort_by(|&a, &b| modes[a].mean.total_cmp(&modes[b].mean));
        Ok(GaussianMixtureModel {
            modes: order.iter().map(|&i| modes[i]).collect(),
            retained: order,
            iterations: 0,
            converged: true,
        })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// The mode a value is normalized against. Ties go to the lowest index.
    pub fn select_mode(&self, x: f64, weighting: ModeWeighting) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, m) in self.modes.iter().enumerate() {
            let mut score = m.log_density(x);
            if weighting == ModeWeighting::Weighted {
                score += m.weight.ln();
            }
            if score > best_score {
                best = k;
                best_score = score;
            }
        }
        best
    }

    /// Mixture density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.weight * m.log_density(x).exp())
            .sum()
    }
}

/// Fits a variational Gaussian mixture to `values`.
pub fn fit_vgm(values: &[f64], config: &VgmConfig) -> Result<GaussianMixtureModel> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot fit a mixture to no values".into(),
        ));
    }
    if config.max_modes == 0 {
        return Err(Error::InvalidArgument(
            "max_modes must be at least 1".into(),
        ));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("mixture input value {bad}")));
    }
    let n = values.len();
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        let std = 1e-6 * first.abs().max(1.0);
        return Ok(GaussianMixtureModel {
            modes: vec![Mode {
                weight: 1.0,
                mean: first,
                std,
            }],
            retained: vec![0],
            iterations: 0,
            converged: true,
        });
    }
    let std_floor = config.std_floor_ratio * var.sqrt();

    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let k = config.max_modes.min(distinct.len());

    let alpha0 = config
        .weight_concentration
        .unwrap_or(1.0 / config.max_modes as f64);
    let prior = Prior {
        alpha0,
        beta0: 1.0,
        m0: mean,
        nu0: 1.0,
        w0_inv: var,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers = kmeans(values, k, &mut rng);
    let mut resp = vec![0.0; n * k];
    for (i, &x) in values.iter().enumerate() {
        let c = nearest(&centers, x);
        resp[i * k + c] = 1.0;
    }

    let mut post = Posterior::update(values, &resp, k, &prior);
    let mut bound = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iter {
        iterations = it;
        let new_bound = post.expectation(values, &mut resp);
        let previous = post.weights();
        post = Posterior::update(values, &resp, k, &prior);
        let weight_shift = post
            .weights()
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if bound.is_finite()
            && (new_bound - bound).abs() <= config.tol * new_bound.abs().max(1e-12)
            && weight_shift <= config.weight_tol
        {
            converged = true;
            break;
        }
        bound = new_bound;
    }
    if !converged {
        log::debug!("vgm stopped at the {iterations}-iteration cap without converging");
    }

    let alpha_sum: f64 = post.alpha.iter().sum();
    let mut kept: Vec<(usize, Mode)> = (0..k)
        .map(|j| {
            let var_j = post.w_inv[j] / post.nu[j];
            (
                j,
                Mode {
                    weight: post.alpha[j] / alpha_sum,
                    mean: post.m[j],
                    std: var_j.sqrt().max(std_floor),
                },
            )
        })
        .filter(|(_, m)| m.weight >= config.prune_threshold)
        .collect();
    if kept.is_empty() {
        // Every component under the threshold only happens with a huge
        // max_modes; keep the heaviest.
        let j = (0..k)
            .max_by(|&a, &b| post.alpha[a].total_cmp(&post.alpha[b]))
            .unwrap_or(0);
        kept.push((
            j,
            Mode {
                weight: 1.0,
                mean: post.m[j],
                std: (post.w_inv[j] / post.nu[j]).sqrt().max(std_floor),
            },
        ));
    }
    let total: f64 = kept.iter().map(|(_, m)| m.weight).sum();
    for (_, m) in &mut kept {
        m.weight /= total;
    }
    kept.sort_by(|a, b| a.1.mean.total_cmp(&b.1.mean));
    Ok(GaussianMixtureModel {
        retained: kept.iter().map(|(j, _)| *j).collect(),
        modes: kept.into_iter().map(|(_, m)| m).collect(),
        iterations,
        converged,
    })
}

struct Prior {
    alpha0: f64,
    beta0: f64,
    m0: f64,
    nu0: f64,
    w0_inv: f64,
}

struct Posterior {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    m: Vec<f64>,
    nu: Vec<f64>,
    w_inv: Vec<f64>,
}

impl Posterior {
    fn weights(&self) -> Vec<f64> {
        let total: f64 = self.alpha.iter().sum();
        self.alpha.iter().map(|a| a / total).collect()
    }

    fn update(values: &[f64], resp: &[f64], k: usize, prior: &Prior) -> Self {
        let mut nk = vec![0.0; k];
        let mut sx = vec![0.0; k];
        for (i, &x) in values.iter().enumerate() {
            let row = &resp[i * k..(i + 1) * k];
            for j in 0..k {
                nk[j] += row[j];
                sx[j] += row[j] * x;
            }
        }
        let tiny = 10.0 * f64::EPSILON;
        let xbar: Vec<f64> = (0..k).map(|j| sx[j] / (nk[j] + tiny)).collect();
        let mut sk = vec![0.0; k];
        for (i, &x) in values.iter().enumerate() {
            let row = &resp[i * k..(i + 1) * k];
            for j in 0..k {
                let d = x - xbar[j];
                sk[j] += row[j] * d * d;
            }
        }
        let mut post = Posterior {
            alpha: Vec::with_capacity(k),
            beta: Vec::with_capacity(k),
            m: Vec::with_capacity(k),
            nu: Vec::with_capacity(k),
            w_inv: Vec::with_capacity(k),
        };
        for j in 0..k {
            let n = nk[j] + tiny;
            let beta = prior.beta0 + n;
            let d = xbar[j] - prior.m0;
            post.alpha.push(prior.alpha0 + n);
            post.beta.push(beta);
            post.m.push((prior.beta0 * prior.m0 + n * xbar[j]) / beta);
            post.nu.push(prior.nu0 + n);
            post.w_inv
                .push(prior.w0_inv + sk[j] + prior.beta0 * n / beta * d * d);
        }
        post
    }

    /// Recomputes responsibilities in place and returns the mean log
    /// normalizer, which tracks the variational bound.
    fn expectation(&self, values: &[f64], resp: &mut [f64]) -> f64 {
        let k = self.alpha.len();
        let alpha_sum: f64 = self.alpha.iter().sum();
        let dg_sum = digamma(alpha_sum);
        let consts: Vec<f64> = (0..k)
            .map(|j| {
                let e_ln_pi = digamma(self.alpha[j]) - dg_sum;
                let e_ln_lambda =
                    digamma(0.5 * self.nu[j]) + std::f64::consts::LN_2 - self.w_inv[j].ln();
                e_ln_pi + 0.5 * e_ln_lambda - 0.5 * LN_2PI - 0.5 / self.beta[j]
            })
            .collect();
        let precision: Vec<f64> = (0..k).map(|j| self.nu[j] / self.w_inv[j]).collect();
        let mut total = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let row = &mut resp[i * k..(i + 1) * k];
            let mut max = f64::NEG_INFINITY;
            for j in 0..k {
                let d = x - self.m[j];
                row[j] = consts[j] - 0.5 * precision[j] * d * d;
                max = max.max(row[j]);
            }
            let mut sum = 0.0;
            for r in row.iter_mut() {
                *r = (*r - max).exp();
                sum += *r;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
            total += max + sum.ln();
        }
        total / values.len() as f64
    }
}

/// k-means++ seeding followed by Lloyd refinement.
fn kmeans(values: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = values.len();
    let mut centers = vec![values[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = values.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            values[pick]
        } else {
            values[rng.random_range(0..n)]
        };
        centers.push(next);
        for (d, x) in d2.iter_mut().zip(values) {
            *d = d.min((x - next).powi(2));
        }
    }
    for _ in 0..50 {
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for &x in values {
            let c = nearest(&centers, x);
            sum[c] += x;
            count[c] += 1;
        }
        let mut moved = false;
        for j in 0..k {
            if count[j] > 0 {
                let c = sum[j] / count[j] as f64;
                if c != centers[j] {
                    moved = true;
                    centers[j] = c;
                }
            }
        }
        if !moved {
            break;
        }
    }
    centers
}

fn nearest(centers: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = (x - c).abs();
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn two_mode_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Normal::new(-4.0, 1.0).unwrap();
        let b = Normal::new(3.0, 0.5).unwrap();
        (0..n)
            .map(|_| {
                if rng.random_bool(0.5) {
                    a.sample(&mut rng)
                } else {
                    b.sample(&mut rng)
                }
            })
            .collect()
    }

    #[test]
    fn recovers_two_modes() {
        let gmm = fit_vgm(&two_mode_sample(10_000, 11), &VgmConfig::default()).unwrap();
        assert_eq!(gmm.n_modes(), 2, "{gmm:?}");
        let m = gmm.modes();
        assert!((m[0].mean + 4.0).abs() < 0.2);
        assert!((m[1].mean - 3.0).abs() < 0.2);
        assert!((m[0].weight - 0.5).abs() < 0.05);
        assert!((m[0].std - 1.0).abs() < 0.1);
        assert!((m[1].std - 0.5).abs() < 0.05);
    }

    #[test]
    fn weights_sum_to_one_and_sorted() {
        let gmm = fit_vgm(&two_mode_sample(3000, 5), &VgmConfig::default()).unwrap();
        let s: f64 = gmm.modes().iter().map(|m| m.weight).sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(gmm.modes().windows(2).all(|w| w[0].mean <= w[1].mean));
        assert!(gmm.modes().iter().all(|m| m.std > 0.0));
    }

    #[test]
    fn constant_column_single_mode() {
        let gmm = fit_vgm(&[7.5; 100], &VgmConfig::default()).unwrap();
        assert_eq!(gmm.n_modes(), 1);
        assert_eq!(gmm.modes()[0].mean, 7.5);
        assert!(gmm.modes()[0].std > 0.0);
    }

    #[test]
    fn hours_per_week_has_several_peaks() {
        // Dominant peak at 40 with lower peaks at 20, 50 and 60.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let peaks = [
            (40.0, 1.5, 0.55),
            (20.0, 2.0, 0.15),
            (50.0, 1.5, 0.15),
            (60.0, 2.0, 0.15),
        ];
        let values: Vec<f64> = (0..10_000)
            .map(|_| {
                let mut u: f64 = rng.random();
                for (mu, sd, w) in peaks {
                    if u < w {
                        return Normal::new(mu, sd).unwrap().sample(&mut rng);
                    }
                    u -= w;
                }
                unreachable!()
            })
            .collect();
        let gmm = fit_vgm(&values, &VgmConfig::default()).unwrap();
        assert!(gmm.n_modes() >= 3, "{gmm:?}");
    }

    #[test]
    fn deterministic_under_seed() {
        let v = two_mode_sample(2000, 8);
        let c = VgmConfig::default();
        assert_eq!(fit_vgm(&v, &c).unwrap(), fit_vgm(&v, &c).unwrap());
    }

    #[test]
    fn selection_prefers_weighted_density() {
        let gmm = GaussianMixtureModel::from_modes(vec![
            Mode {
                weight: 0.9,
                mean: 0.0,
                std: 1.0,
            },
            Mode {
                weight: 0.1,
                mean: 2.0,
                std: 1.0,
            },
        ])
        .unwrap();
        // Closer to mode 1 but the heavy mode wins under weighting.
        assert_eq!(gmm.select_mode(1.2, ModeWeighting::Weighted), 0);
        assert_eq!(gmm.select_mode(1.2, ModeWeighting::Unweighted), 1);
        // Exact midpoint ties break low.
        assert_eq!(gmm.select_mode(1.0, ModeWeighting::Unweighted), 0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_vgm(&[], &VgmConfig::default()).is_err());
        assert!(fit_vgm(&[1.0, f64::NAN], &VgmConfig::default()).is_err());
        let c = VgmConfig {
            max_modes: 0,
            ..Default::default()
        };
        assert!(fit_vgm(&[1.0, 2.0], &c).is_err());
    }
}
