pub mod dataset;
pub mod error;
pub mod features;
pub mod models;
pub mod nn;
pub mod partition;
pub mod seed;
pub mod setfn;
pub mod uncertainty;
pub mod greedy;
pub mod inference;
pub mod analysis;
pub mod experiment;
