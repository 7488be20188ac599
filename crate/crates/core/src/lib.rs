#![cfg_attr(not(test), no_std)]
extern crate alloc;

pub mod augment;
pub mod autodiff;
pub mod checks;
pub mod data;
pub mod error;
pub mod generator;
pub mod matrix;
pub mod objectives;
pub mod optim;
pub mod recommender;
pub mod sinkhorn;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
