//! Configuration, field expressions and output writers.

pub mod config;
pub mod csv;
pub mod expr;
pub mod vtk;
