//! Online multi-unit allocation with randomized waiting, an exact outcome
//! analyzer, and a random-sampling truthful auction built on top.
//!
//! The pieces:
//!
//! * [`instance`] — bid profiles, revenue curves `f(l) = l * u_l`, critical
//!   points, generators, and instance file I/O.
//! * [`offline`] — the optimal single-price benchmark.
//! * [`allocator`] — the online state machine that allocates up each revenue
//!   peak and waits a random number of copies before chasing the next one.
//! * [`analyzer`] — exact outcome distributions via rational dynamic
//!   programming over the wait chain, case classification, and ratio sweeps.
//! * [`mechanism`] — random bidder partition, fictitious paced runs, VCG
//!   payments, bidder dominance, and truthfulness checking.
//! * [`report`] — CSV/JSON emission for the CLI.

pub mod allocator;
pub mod analyzer;
pub mod error;
pub mod instance;
pub mod mechanism;
pub mod offline;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
