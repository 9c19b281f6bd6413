//! Butterfly-structured weight matrices: Kronecker support patterns,
//! support-constrained factors, chains with an `O(Σ nnz)` matrix-vector
//! product, monotone chain selection, and substitution into models.

mod chain;
mod pattern;
mod select;
mod substitute;

pub use chain::{chain_matvec, chain_to_dense, ButterflyChain, ButterflyFactor};
pub use pattern::{pattern_nnz, SupportPattern};
pub use select::{enumerate_monotone_chains, is_monotone_chain, select_min_param_chain, ChainSpec};
pub(crate) use substitute::apply_butterfly_structure;
pub use substitute::{count_model_params, densify, substitute_butterfly, ParamCount};
