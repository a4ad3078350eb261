// Range checks are written `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod env_model;
pub mod error;
pub mod global_planner;
pub mod grid;
pub mod local_planner;
pub mod mapping;
pub mod nav_sim;
pub mod octree_map;
pub mod pgm;
pub mod pipeline;
pub mod scenario;
pub mod traversability;

pub use error::{NavError, Result};
