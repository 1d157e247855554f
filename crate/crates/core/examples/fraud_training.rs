//! Train the fraud scorer on synthetic data and evaluate it on a holdout split.

use cardless::fraud::{evaluate, fit, ClassWeight, TrainConfig};
use cardless::sim::gen_dataset;

fn main() {
    for separation in [0.0, 1.0, 2.0] {
        let data = gen_dataset(42, 10_000, 0.1, separation).unwrap();
        let (train, holdout) = data.split(0.8);
        let cfg = TrainConfig { class_weight: ClassWeight::Balanced, ..TrainConfig::default() };
        let run = fit(&train, &cfg).unwrap();
        let m = evaluate(&run.model, &holdout).unwrap();
        println!(
            "separation {separation}: loss {:.4} -> {:.4}, auc {:.3}, recall {:.3}, precision {:.3}",
            run.losses[0],
            run.losses.last().unwrap(),
            m.auc.unwrap_or(f64::NAN),
            m.recall,
            m.precision
        );
    }
}
