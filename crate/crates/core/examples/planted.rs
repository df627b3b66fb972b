//! Trains on the planted table and prints similarity figures.
//!
//! ```text
//! cargo run --release -p tabsynth --example planted -- 100
//! ```

use std::time::Instant;

use tabsynth::demo::{label, planted_schema, planted_table};
use tabsynth::evaluate::similarity;
use tabsynth::gan::{Synthesizer, TrainConfig};

fn main() -> tabsynth::Result<()> {
    let epochs = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20);
    let table = planted_table(5000, 7);
    let schema = planted_schema(&table)?;
    let config = TrainConfig {
        epochs,
        seed: 1,
        ..TrainConfig::default()
    };

    let start = Instant::now();
    let model = Synthesizer::fit_with_progress(&table, &schema, &config, |r| {
        eprintln!("epoch {:>3}  d {:.3}  g {:.3}", r.epoch, r.d_loss, r.g_adv);
    })?;
    println!(
        "trained {epochs} epochs in {:.0}s",
        start.elapsed().as_secs_f64()
    );

    let synth = model.synthesize(5000, None, 3)?;
    let (sim, _, _) = similarity(&table, &synth, &schema)?;
    for (name, v) in &sim.jsd {
        println!("jsd {name:<4} {v:.4}");
    }
    for (name, w) in &sim.wasserstein {
        println!("wd  {name:<4} {:.4} (scaled {:.4})", w.raw, w.scaled);
    }

    let (a, b, c, y) = (
        synth.column("a")?,
        synth.column("b")?,
        synth.column("c")?,
        synth.column("y")?,
    );
    let n = synth.n_rows() as f64;
    let zeros = c.numbers().iter().filter(|v| **v == Some(0.0)).count() as f64 / n;
    let high = a.numbers().iter().flatten().filter(|v| **v > 4.0).count() as f64 / n;
    let consistent = (0..synth.n_rows())
        .filter(|&r| {
            Some(label(a.number(r).unwrap_or(0.0), b.token(r).unwrap_or(""))) == y.token(r)
        })
        .count() as f64
        / n;
    println!(
        "zeros in c {:.1}%, a above 4 {:.1}%, y follows the rule {:.1}%",
        100.0 * zeros,
        100.0 * high,
        100.0 * consistent
    );
    Ok(())
}
