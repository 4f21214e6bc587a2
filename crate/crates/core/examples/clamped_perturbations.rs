//! Loan explanations with and without telling the explainer the allowed
//! feature values. Clamped perturbations land on real grid points, which pulls
//! the explainer toward the ground-truth fit.
//!
//!     cargo run --release --example clamped_perturbations

use gtebench::datagen::{default_removals, generate_loan};
use gtebench::evalmetrics::{build_report, EvalOptions};
use gtebench::explainer::{Explainer, ExplainerConfig};
use gtebench::gte::{batch_gte, GteConfig};
use gtebench::model::{train, ModelConfig, TrainConfig};

fn main() -> gtebench::Result<()> {
    let loan = generate_loan(&default_removals())?;
    let model = train(
        &loan,
        &ModelConfig::nn1(3, 2),
        &TrainConfig {
            epochs: 50_000,
            learning_rate: 0.1,
            batch_size: 8,
            target_loss: Some(3e-4),
            ..Default::default()
        },
    )?;
    for k in [5, 25, 50] {
        let gte = batch_gte(&loan, &loan.instances, &GteConfig::default().with_num_samples(k), 20)?;
        for clamp in [false, true] {
            let cfg = ExplainerConfig {
                num_samples: k,
                clamp_to_schema: clamp,
                seed: 11,
                ..Default::default()
            };
            let exp = Explainer::new(&loan, cfg)?.batch_explain(&model, &loan.instances, 20)?;
            let r = build_report("loan", &exp, &gte, None, &EvalOptions::default())?;
            println!(
                "num_samples={k:>2} clamp={clamp:<5} mean distance {:.4}  second {:.3}  all {:.3}  zeros {:?}",
                r.averages.ed, r.averages.second_correct, r.averages.all_correct, r.explainer_zeros.counts
            );
        }
    }
    Ok(())
}
