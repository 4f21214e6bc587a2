//! Explains one Loan prediction and sets it beside the ground-truth fit for
//! the same instance.
//!
//!     cargo run --release --example explain_instance [instance_id]

use gtebench::datagen::{default_removals, generate_loan};
use gtebench::evalmetrics::{euclidean, order_correct, rank_features, RankBy};
use gtebench::explainer::{Explainer, ExplainerConfig};
use gtebench::gte::{gte_explain, GteConfig};
use gtebench::model::{train, ModelConfig, TrainConfig};
use gtebench::numerics::Rng;

fn main() -> gtebench::Result<()> {
    let id: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(13);
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
    let inst = &loan.instances[id];
    println!("instance {id}: {:?}, label {}", inst.features, loan.meta.class_names[inst.label]);

    let explainer = Explainer::new(&loan, ExplainerConfig::default())?;
    let exp = explainer.explain(&model, &inst.features, &mut Rng::new(11))?;
    let gte = gte_explain(&loan, inst, &GteConfig::default(), None)?;

    println!("explainer  {:?} (intercept {:.4})", exp.coefficients, exp.intercept);
    println!("ground     {:?} (intercept {:.4})", gte.coefficients, gte.intercept);
    println!("neighbors  {:?}", &gte.neighbors[1..]);
    let (second, all) = order_correct(
        &rank_features(&gte.coefficients, RankBy::Absolute)?,
        &rank_features(&exp.coefficients, RankBy::Absolute)?,
    )?;
    println!(
        "distance {:.4}, second correct {second}, all correct {all}",
        euclidean(&exp.coefficients, &gte.coefficients)?
    );
    Ok(())
}
