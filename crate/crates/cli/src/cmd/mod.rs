pub mod filter;
pub mod judge;
pub mod refine;
pub mod reward;
pub mod stats;
pub mod synthesize;
