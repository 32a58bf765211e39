//! Example generators and the learning-curve harness for the waiter,
//! chess, droplast and encryption domains.

pub mod domains;
pub mod harness;

pub use domains::{Domain, DomainSpec, Generator, Polarity, SpecError};
pub use harness::{run_bench, run_cell, summarize, write_csv, BenchConfig, BenchResult, Engine, MeanSe, Summary};
