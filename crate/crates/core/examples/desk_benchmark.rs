//! Time and Distance at desk scale: 2,000 rows per class, 500 instances both
//! models get right, 10 explanation runs.
//!
//!     cargo run --release --example desk_benchmark [rows_per_class]

use std::path::Path;

use gtebench::datagen::{generate_equation_dataset, Equation, GeneratorConfig};
use gtebench::evalmetrics::{build_report, EvalOptions};
use gtebench::explainer::{Explainer, ExplainerConfig};
use gtebench::gte::{batch_gte, GteConfig};
use gtebench::model::{select_correct, train};
use gtebench::numerics::Rng;
use gtebench::pipeline::ModelFile;

fn main() -> gtebench::Result<()> {
    let rows: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let num_samples = 100;
    for equation in [Equation::Time, Equation::Distance] {
        let ds = generate_equation_dataset(&GeneratorConfig::builtin(equation).with_rows_per_class(rows))?;
        let mut models = Vec::new();
        for net in ["nn1_desk", "nn2_desk"] {
            let file = ModelFile::load(&configs.join(format!("{net}.toml")))?;
            models.push(train(&ds, &file.model_config(&ds), &file.training)?);
        }
        println!(
            "{}: test accuracy NN1 {:.3}, NN2 {:.3}",
            ds.name(),
            models[0].test_accuracy.unwrap_or(0.0),
            models[1].test_accuracy.unwrap_or(0.0)
        );
        let picked = select_correct(&[&models[0], &models[1]], &ds.instances, 500, &mut Rng::new(11))?;
        let explainer = Explainer::new(&ds, ExplainerConfig { num_samples, seed: 11, ..Default::default() })?;
        let exp1 = explainer.batch_explain(&models[0], &picked, 10)?;
        let exp2 = explainer.batch_explain(&models[1], &picked, 10)?;
        let gte = batch_gte(&ds, &picked, &GteConfig::default().with_num_samples(num_samples), 10)?;
        let report = build_report(ds.name(), &exp1, &gte, Some(&exp2), &EvalOptions::default())?;
        print!("{}", report.summary_csv());
        println!("{}", report.invariance_line().unwrap_or_default());
    }
    Ok(())
}
