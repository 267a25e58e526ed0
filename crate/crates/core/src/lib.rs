//! Detection of order-dependent flaky tests in Jest projects.
//!
//! The pipeline parses test files into span trees ([`testmodel`]), samples
//! unique orders ([`permute`]), materializes each order as a variant file or
//! a sequencer argument ([`rewrite`], [`orchestrate`]), reruns every order,
//! and classifies the outcomes ([`verdict`]). [`simharness`] provides an
//! in-process runner with the same interface for toolchain-free testing.

pub mod corpus;
pub mod orchestrate;
pub mod permute;
pub mod pipeline;
pub mod report;
pub mod rewrite;
pub mod simharness;
pub mod testmodel;
pub mod verdict;
