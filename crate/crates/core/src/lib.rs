//! Navigation with asynchronous perception and control.

pub mod error;
pub mod harness;
pub mod learn;
pub mod pointcloud;
pub mod policy;
pub mod reward;
pub mod schedule;
pub mod temporal;
pub mod world;

pub use error::{NavError, Result};
