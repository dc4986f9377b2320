pub mod abc;
pub mod bench;
pub mod config;
pub mod credit;
pub mod moo;
pub mod operators;
pub mod problem;
pub mod selection;
