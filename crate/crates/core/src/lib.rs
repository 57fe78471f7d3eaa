//! Optimal stopping of regime-switching diffusions.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chain;
pub mod hjb;
pub mod probcfg;
pub mod rng;
pub mod scalar;
pub mod sde;
pub mod verify;

pub type ValueField = hjb::ValueField<f64>;
pub type ValueField32 = hjb::ValueField<f32>;
pub type Solution = hjb::Solution<f64>;
pub type Solution32 = hjb::Solution<f32>;
pub type PutOracle = verify::PutOracle<f64>;
pub type PutOracle32 = verify::PutOracle<f32>;
