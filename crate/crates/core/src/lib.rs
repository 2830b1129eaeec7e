//! Simulation library for primitive E-machines.
//!
//! The crate is organised bottom-up:
//!
//! * [`codes`]: symbol vectors, similarity functions, the correct-decoding check.
//! * [`machines`]: combinatorial, probabilistic and Mealy machines plus
//!   black-box equivalence testing.
//! * [`ann0`]: the three-layer winner-take-all network, its closed-form
//!   transient and its periodic-inhibition symbolic drive.
//! * [`afield`]: associative fields AF-0 and AF-1 with E-states,
//!   tape-recording learning and reconfiguration.
//! * [`robot`]: a tape world, a teacher, and a brain of two associative
//!   fields that learns to run the teacher's algorithm with real or
//!   imagined tape.
//! * [`pmm`] and [`epmm`]: protein-molecule machines as continuous-time
//!   Markov chains, their ensembles, and a coupled membrane.
//! * [`experiment`] and [`verify`]: configuration-driven runs and the
//!   named verification suites used by the CLI.

pub mod afield;
pub mod ann0;
pub mod codes;
pub mod epmm;
pub mod error;
pub mod experiment;
pub mod machines;
pub mod pmm;
pub mod rng;
pub mod robot;
pub mod verify;

pub use codes::{correct_decoding_check, similarity, DecodingVerdict, Similarity, SymbolVector, EPS_SCORE};
pub use error::{Error, Result};
