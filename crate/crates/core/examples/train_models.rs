//! Trains NN1 and NN2 on Loan and on a desk-sized Time dataset using the
//! shipped model configs.
//!
//!     cargo run --release --example train_models

use std::path::Path;

use gtebench::datagen::{default_removals, generate_equation_dataset, generate_loan, Equation, GeneratorConfig};
use gtebench::model::train;
use gtebench::pipeline::ModelFile;

fn main() -> gtebench::Result<()> {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let loan = generate_loan(&default_removals())?;
    let time = generate_equation_dataset(&GeneratorConfig::builtin(Equation::Time).with_rows_per_class(2000))?;

    for (ds, suffix) in [(&loan, ""), (&time, "_desk")] {
        for net in ["nn1", "nn2"] {
            let file = ModelFile::load(&configs.join(format!("{net}{suffix}.toml")))?;
            let model = train(ds, &file.model_config(ds), &file.training)?;
            print!(
                "{:<5} {net}: layers {:?}, {} epochs, loss {:.2e}, train acc {:.3}",
                ds.name(),
                model.config().layers,
                model.epochs_run,
                model.final_loss,
                model.train_accuracy
            );
            match model.test_accuracy {
                Some(acc) => println!(", test acc {acc:.3}"),
                None => println!(),
            }
        }
    }
    Ok(())
}
