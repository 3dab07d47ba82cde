//! Trajectory synthesis for Signal Temporal Logic specifications.
//!
//! A specification in the supported fragment is compiled into smooth
//! per-timestep running costs ([`costgen`]) whose strict negativity along a
//! trajectory certifies satisfaction. The costs are minimized with an
//! iterative LQR solver ([`ddp`]) over a discrete-time model ([`dynamics`]).

// Negated comparisons deliberately reject NaN in parameter validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod costgen;
pub mod ddp;
pub mod dynamics;
pub mod smoothing;
pub mod stl;

pub use smoothing::{
    smooth_max, smooth_max_value, smooth_min, smooth_min_value, smooth_state_robustness, smooth_state_robustness_value, SmoothParams, SmoothValue,
};
pub use stl::{parse_spec, Signal, Specification};
