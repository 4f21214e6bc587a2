//! Ground-truth coefficients for Loan at several neighborhood sizes, with the
//! zero census that makes small neighborhoods misleading.
//!
//!     cargo run --release --example gte_alignment

use gtebench::datagen::{default_removals, generate_loan};
use gtebench::evalmetrics::zero_census;
use gtebench::gte::{batch_gte, GteConfig};

fn main() -> gtebench::Result<()> {
    let loan = generate_loan(&default_removals())?;
    for k in [5, 10, 25, 50] {
        let m = batch_gte(&loan, &loan.instances, &GteConfig::default().with_num_samples(k), 1)?;
        let zeros = zero_census(&m, 0.0);
        println!("num_samples={k:>2}: zero coefficients per feature {:?} of {}", zeros.counts, zeros.total);
    }

    let m = batch_gte(&loan, &loan.instances, &GteConfig::default(), 1)?;
    println!("\nnum_samples=25, first instances:");
    for slot in 0..5 {
        let c = m.coefficients(0, slot);
        println!("  id {:>2} {:?} -> [{:+.4}, {:+.4}, {:+.4}]", m.instance_ids[slot], loan.instances[slot].features, c[0], c[1], c[2]);
    }
    Ok(())
}
