//! Builds the three datasets and prints their class balance and overlap.
//!
//!     cargo run --release --example generate_datasets [rows_per_class]

use gtebench::datagen::{
    class_overlap_report, default_removals, generate_equation_dataset, generate_loan, Dataset, Equation,
    GeneratorConfig,
};

fn describe(ds: &Dataset) -> gtebench::Result<()> {
    println!("{}: {} instances, {} features {:?}", ds.name(), ds.len(), ds.feature_count(), ds.schema().names());
    for (name, count) in ds.meta.class_names.iter().zip(ds.class_histogram()) {
        println!("  {name:<12} {count}");
    }
    let overlap = class_overlap_report(ds)?;
    println!("  mean pairwise class overlap {:.3}", overlap.mean_off_diagonal());
    Ok(())
}

fn main() -> gtebench::Result<()> {
    let rows: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);

    let loan = generate_loan(&default_removals())?;
    describe(&loan)?;
    for inst in loan.instances.iter().take(3) {
        println!("  e.g. {:?} -> {}", inst.features, loan.meta.class_names[inst.label]);
    }

    for equation in [Equation::Time, Equation::Distance] {
        let cfg = GeneratorConfig::builtin(equation).with_rows_per_class(rows);
        let ds = generate_equation_dataset(&cfg)?;
        describe(&ds)?;
        let base = ds.instances.iter().find(|i| i.variation_id == 0).unwrap();
        println!("  base row {:?} energy {:.3}", base.features, base.energy.unwrap_or(f64::NAN));
    }
    Ok(())
}
