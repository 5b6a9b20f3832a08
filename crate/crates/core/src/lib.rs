pub mod cli;
pub mod cost;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod math;
pub mod model;
pub mod recourse;
pub mod surrogate;
pub mod theory;
