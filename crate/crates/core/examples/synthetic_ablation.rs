//! Trains on procedurally generated classes and prints mAP for a few
//! shadow-weight ratios. Usage: synthetic_ablation [epochs] [noise]

use shadowhash::data::{make_split, synthetic, SplitSpec};
use shadowhash::pipeline::train_and_evaluate;
use shadowhash::shadow::TrainConfig;

fn main() -> shadowhash::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let noise: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.6);
    let ratios: Vec<f64> = args
        .get(3)
        .map(|s| s.split(',').filter_map(|x| x.parse().ok()).collect())
        .unwrap_or_else(|| vec![0.1, 1.0, 10.0, 100.0]);
    let images = synthetic::textured(10, 200, noise, 7);
    let spec = SplitSpec {
        n_query: 100,
        n_database: Some(1900),
        n_train: 500,
    };
    let split = make_split(images.labels(), spec, 1)?;
    for ratio in ratios {
        let beta = 0.01;
        let mut cfg = TrainConfig::srh(12, ratio * beta, beta);
        cfg.epochs = epochs;
        let start = std::time::Instant::now();
        let run = train_and_evaluate(&images, &split, &cfg, None, |e| {
            eprintln!("  epoch {:3} loss {:.4} (pair {:.4} shadow {:.4} norm {:.4})", e.epoch, e.mean_loss, e.pair, e.shadow, e.norm)
        })?;
        println!(
            "alpha/beta={ratio:<6} mAP={:.4} ({:.1}s)",
            run.map.map,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
