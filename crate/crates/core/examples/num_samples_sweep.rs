//! Sweeps num_samples on Loan and draws the three measures per instance, one
//! shade per setting.
//!
//!     cargo run --release --example num_samples_sweep [out.svg]

use gtebench::datagen::{default_removals, generate_loan};
use gtebench::evalmetrics::{build_report, EvalOptions};
use gtebench::explainer::{Explainer, ExplainerConfig};
use gtebench::gte::{batch_gte, GteConfig};
use gtebench::model::{train, ModelConfig, TrainConfig};
use gtebench::svg;

fn main() -> gtebench::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("sweep.svg").display().to_string());
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

    let mut reports = Vec::new();
    for k in [5, 25, 50] {
        let explainer = Explainer::new(&loan, ExplainerConfig { num_samples: k, seed: 11, ..Default::default() })?;
        let exp = explainer.batch_explain(&model, &loan.instances, 100)?;
        let gte = batch_gte(&loan, &loan.instances, &GteConfig::default().with_num_samples(k), 100)?;
        let report = build_report("loan", &exp, &gte, None, &EvalOptions::default())?;
        reports.push((format!("num_samples={k}"), report));
    }
    print!("{}", svg::summary_table(&reports));
    std::fs::write(&out, svg::sweep_chart(&reports)?).map_err(|e| gtebench::Error::Io { path: out.clone().into(), source: e })?;
    println!("wrote {out}");
    Ok(())
}
