//! Switchback pricing experiments on a continuum market with forward-looking
//! buyers.
//!
//! A [`DemandProcess`] describes who arrives each period (values and
//! patience), a [`SwitchbackDesign`] describes the randomized price ladder,
//! and [`Market`] runs experiments whose level aggregates feed the naive and
//! debiased gradient estimators in [`estimators`]. The [`harness`] module
//! wraps all of it in seeded Monte Carlo studies.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod buyer;
pub mod design;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod market;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use buyer::{build_threshold_table, PostExperimentBelief, ThresholdTable};
pub use design::SwitchbackDesign;
pub use error::{Error, Result};
pub use estimators::{AggregatedSales, EstimatorId, EstimatorSuite, Normalization};
pub use market::{ConditionalDemandFamily, DemandProcess, PatienceAtom, PatienceMixture, TimeVariation};
pub use simulator::{aggregate, run_experiment, ExperimentTrace, HorizonMode, Market, PeriodRecord};
