pub mod catalog;
pub mod cli;
pub mod conservation;
pub mod discovery;
pub mod expr;
pub mod extremal;
pub mod ocp;
pub mod sampling;
