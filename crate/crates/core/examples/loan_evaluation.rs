//! Full Loan evaluation: two models, 100 explanation runs, ground truth at
//! num_samples=25, scores and the implementation-invariance test. Files land
//! in the given directory.
//!
//!     cargo run --release --example loan_evaluation [out_dir]

use std::path::{Path, PathBuf};

use gtebench::datagen::{default_removals, generate_loan};
use gtebench::evalmetrics::{build_report, EvalOptions};
use gtebench::explainer::ExplainerConfig;
use gtebench::explainer::Explainer;
use gtebench::gte::{batch_gte, GteConfig};
use gtebench::model::train;
use gtebench::pipeline::{load_toml, ModelFile};
use gtebench::svg;

fn main() -> gtebench::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("loan_eval"));
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let loan = generate_loan(&default_removals())?;

    let mut models = Vec::new();
    for net in ["nn1", "nn2"] {
        let file = ModelFile::load(&configs.join(format!("{net}.toml")))?;
        models.push(train(&loan, &file.model_config(&loan), &file.training)?);
    }
    let cfg: ExplainerConfig = load_toml(&configs.join("explainer.toml"))?;
    let explainer = Explainer::new(&loan, cfg)?;
    let exp1 = explainer.batch_explain(&models[0], &loan.instances, 100)?;
    let exp2 = explainer.batch_explain(&models[1], &loan.instances, 100)?;
    let gte = batch_gte(&loan, &loan.instances, &GteConfig::default(), 100)?;

    let report = build_report("loan", &exp1, &gte, Some(&exp2), &EvalOptions::default())?;
    print!("{}", report.summary_csv());
    println!("{}", report.invariance_line().unwrap_or_default());
    println!("explainer zeros {:?}, ground-truth zeros {:?}", report.explainer_zeros.counts, report.gte_zeros.counts);

    report.save(&out)?;
    std::fs::write(out.join("instances.svg"), svg::instance_chart(&report, 100)).map_err(|e| gtebench::Error::Io {
        path: out.join("instances.svg"),
        source: e,
    })?;
    println!("wrote {}", out.display());
    Ok(())
}
