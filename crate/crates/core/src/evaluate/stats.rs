use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Base-2 Jensen-Shannon divergence of two distributions on the same support.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.is_empty() || p.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "distributions of length {} and {} are not aligned",
            p.len(),
            q.len()
        )));
    }
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x * (x / y).log2())
            .sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let v = 0.5 * kl(p, &m) + 0.5 * kl(q, &m);
    Ok(v.clamp(0.0, 1.0))
}

/// Relative frequencies of two token samples over the union of observed
/// tokens, in sorted token order. Missing cells count as their own token.
pub fn aligned_frequencies(
    a: &[Option<String>],
    b: &[Option<String>],
) -> Result<(Vec<String>, Vec<f64>, Vec<f64>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let key = |t: &Option<String>| t.clone().unwrap_or_default();
    for t in a {
        counts.entry(key(t)).or_default().0 += 1;
    }
    for t in b {
        counts.entry(key(t)).or_default().1 += 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let labels = counts.keys().cloned().collect();
    let p = counts.values().map(|c| c.0 as f64 / na).collect();
    let q = counts.values().map(|c| c.1 as f64 / nb).collect();
    Ok((labels, p, q))
}

/// First Wasserstein distance between two empirical distributions, the
/// integral of `|F_a − F_b|`, computed exactly over the merged sorted support.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = xa[0].min(xb[0]);
    let mut total = 0.0;
    while i < xa.len() || j < xb.len() {
        let next = match (xa.get(i), xb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < xa.len() && xa[i] == next {
            i += 1;
        }
        while j < xb.len() && xb[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// Percentile `q` ∈ [0, 100] with linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "percentile of an empty sample".into(),
        ));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "percentile {q} outside [0, 100]"
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Points of an empirical CDF, at most `max_points` of them, evenly spaced
/// in rank.
pub fn ecdf_points(values: &[f64], max_points: usize) -> Vec<(f64, f64)> {
    if values.is_empty() || max_points == 0 {
        return Vec::new();
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut push = |x: f64, k: usize| {
        let f = k as f64 / n as f64;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    };
    if n <= max_points {
        for (i, &x) in v.iter().enumerate() {
            push(x, i + 1);
        }
    } else {
        for p in 1..=max_points {
            let k = (p * n).div_ceil(max_points);
            let mut k = k.max(1);
            while k < n && v[k] == v[k - 1] {
                k += 1;
            }
            push(v[k - 1], k);
        }
    }
    out
}
