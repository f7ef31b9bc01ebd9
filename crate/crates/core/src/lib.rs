pub mod observables_validation;
pub mod renormalized_pt;
pub mod reservoir_contractions;
pub mod superfermion_algebra;
pub mod tflow_core;
pub mod timegrid_calculus;
