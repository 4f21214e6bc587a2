//! Synthetic datasets whose classes are defined by known equations.

mod equations;
mod loan;
mod overlap;
mod schema;

pub use equations::{
    apply_variation, base_energy_distance, base_energy_time, generate_equation_dataset, Draw,
    Equation, GeneratorConfig, OpKind, SamplingMode, Truncation, VariableSpec, VariationOp,
    VariationSpec,
};
pub use loan::{
    default_removals, generate_loan, loan_label, loan_schema, loan_score, parse_removals,
    LoanTriple, ACCEPTED, ACCEPT_THRESHOLD, REJECTED,
};
pub use overlap::{class_overlap_report, OverlapReport};
pub use schema::{
    round_to, Dataset, DatasetMeta, FeatureKind, FeatureSchema, FeatureSpec, FeatureStats,
    Instance,
};
pub(crate) use schema::{sha256_hex, short_hash};
