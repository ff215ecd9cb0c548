//! Federated Byzantine quorum systems, federated voting, and a deterministic
//! simulator for an abstract and a concrete Stellar-style consensus protocol,
//! together with a refinement checker relating the two.

pub mod ascp;
pub mod ballot;
pub mod bv;
pub mod corpus;
pub mod cscp;
pub mod fbqs;
pub mod fv;
pub mod golden;
pub mod node;
pub mod refine;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod verdicts;
