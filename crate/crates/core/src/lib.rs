pub mod budget;
pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod constants;
pub mod error;
pub mod fiber;
pub mod geometry;
pub mod micromotion;
pub mod numeric;
pub mod raytrace;
pub mod report;
pub mod reproduce;
pub mod special;
pub mod system;
pub mod thermometry;
pub mod trap;
pub mod wave;

pub use error::{Error, Result};
