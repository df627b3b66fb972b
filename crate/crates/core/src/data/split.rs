use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::schema::TargetSpec;
use super::table::Table;
use crate::error::{Error, Result};

/// Splits `table` into (train, test).
///
/// With a target, each class contributes `test_fraction * class_size` rows to
/// the test set, rounded by largest remainder so the overall test size is
/// `round(test_fraction * rows)` and every class is within one row of its
/// exact share. Rows keep their original relative order in both outputs.
pub fn stratified_split(
    table: &Table,
    target: &TargetSpec,
    test_fraction: f64,
    seed: u64,
) -> Result<(Table, Table)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = table.n_rows();
    let groups: Vec<Vec<usize>> = match target.column_name()? {
        None => vec![(0..n).collect()],
        Some(name) => {
            let col = table.column(name)?;
            let mut by_class: BTreeMap<Option<&str>, Vec<usize>> = BTreeMap::new();
            for r in 0..n {
                by_class.entry(col.token(r)).or_default().push(r);
            }
            for (class, rows) in &by_class {
                if rows.len() < 2 {
                    return Err(Error::InvalidTarget(format!(
                        "class {:?} has {} row(s); stratification needs at least 2",
                        class.unwrap_or("<missing>"),
                        rows.len()
                    )));
                }
            }
            by_class.into_values().collect()
        }
    };

    let quotas = largest_remainder(
        &groups.iter().map(Vec::len).collect::<Vec<_>>(),
        test_fraction,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; n];
    for (rows, quota) in groups.iter().zip(quotas) {
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        for &r in &shuffled[..quota] {
            is_test[r] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&r| is_test[r]);
    Ok((table.select_rows(&train), table.select_rows(&test)))
}

/// Integer quotas `≈ fraction * size` per group summing to
/// `round(fraction * total)`; ties go to the earlier group.
pub(crate) fn largest_remainder(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let want = (fraction * total as f64).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &g in order.iter().cycle().take(want.saturating_sub(assigned)) {
        quotas[g] = (quotas[g] + 1).min(sizes[g]);
    }
    quotas
}
