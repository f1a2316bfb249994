//! Zero-shot recovery on synthetic grids, one line per held-out cell.
//!
//! cargo run --release --example synthetic_recovery -- [n_seeds] [first_seed] [bma_samples]

use std::time::Instant;

use paramfactor::experiment::{run_zero_shot, ZeroShotConfig};
use paramfactor::predict::entropy_accuracy_correlation;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args()
        .nth(i)
        .map_or(default, |s| s.parse().ok().expect("numeric argument"))
}

fn main() -> paramfactor::Result<()> {
    let n_seeds: u64 = arg(1, 3);
    let first: u64 = arg(2, 0);
    let bma: usize = arg(3, 20);
    let start = Instant::now();
    let (mut plug, mut avg) = (Vec::new(), Vec::new());
    for seed in first..first + n_seeds {
        let mut cfg = ZeroShotConfig::acceptance(seed);
        cfg.bma_samples = Some(bma);
        let run = run_zero_shot(&cfg)?;
        println!(
            "seed {seed}: {} steps, best at {} (dev {:.4})",
            run.steps,
            run.best_step,
            run.best_dev.unwrap_or(f64::NAN)
        );
        for o in &run.unseen {
            let b = o.bma.as_ref().expect("bma requested");
            println!(
                "  {}: factor {:.3} bma {:.3} ls {:.3} chance {:.3} oracle {:.3} H {:.3} H_bma {:.3}",
                o.cell,
                o.plug_in.accuracy.unwrap_or(0.0),
                b.accuracy.unwrap_or(0.0),
                o.largest_source.accuracy.unwrap_or(0.0),
                o.chance,
                o.oracle,
                o.plug_in.mean_entropy,
                b.mean_entropy,
            );
            plug.push(o.plug_in.clone());
            avg.push(b.clone());
        }
        println!(
            "  mean factor {:.3} ls {:.3}",
            run.mean_accuracy(|o| &o.plug_in),
            run.mean_accuracy(|o| &o.largest_source)
        );
    }
    println!(
        "plug-in entropy/accuracy (r, p) = {:?}",
        entropy_accuracy_correlation(&plug)?
    );
    println!(
        "bma entropy/accuracy (r, p) = {:?}",
        entropy_accuracy_correlation(&avg)?
    );
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
