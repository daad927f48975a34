//! Time-relaxation reduced order modelling.
//!
//! The crate covers the whole pipeline: a small MAC finite-difference
//! Navier–Stokes solver produces snapshots, [`pod`] builds an L² POD basis,
//! [`rom_ops`] assembles the Galerkin operators and the ROM differential
//! filter, [`tr_rom`] integrates the time-relaxation ROM, and [`study`]
//! turns sweeps over `(r, δ, χ)` into rates, scalings and χ predictions.

pub mod error;
pub mod field;
pub mod fom;
pub mod io;
pub mod pod;
pub mod rom_ops;
pub mod study;
pub mod tr_rom;

pub use error::{Error, Result};
pub use field::{Boundary, Grid, Lid, VectorField};
pub use fom::{run_fom, FomCase, FomConfig, SnapshotSet};
pub use pod::{compute_pod, PodBasis, TailSums};
pub use rom_ops::{assemble_operators, build_filter, star_norm, ConvectionForm, FilterOp, RomOperators};
pub use tr_rom::{run_rom, Scheme, Trajectory, TrRomParams};
