//! Distributed nonconvex optimization over time-varying digraphs.
//!
//! The crate simulates a network of agents that jointly minimize
//! `sum_i f_i(x) + G(x)` over a convex set using push-sum consensus,
//! gradient tracking and successive convex approximation.

pub mod baselines;
pub mod consensus;
pub mod graph;
pub mod metrics;
pub mod problems;
pub mod sonata;
pub mod surrogates;
