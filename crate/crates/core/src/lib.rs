pub mod molgraph;
pub mod fingerprint;
pub mod dataset;
pub mod scorers;
pub mod reactions;
pub mod generator;
pub mod filters;
pub mod stats;
pub mod pipeline;
#[doc(hidden)]
pub mod testkit;
