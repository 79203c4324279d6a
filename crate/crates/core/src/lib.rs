pub mod attacker;
pub mod auction;
pub mod config;
pub mod dataset;
pub mod ecosystem;
pub mod error;
pub mod exhaustive;
pub mod greedy;
pub mod harness;
pub mod matching;
pub mod output;
pub mod par;
pub mod placement;
pub mod prop;
pub mod risk;
pub mod sequence;
pub mod stirling;
