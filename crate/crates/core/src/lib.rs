//! Hyperspectral unmixing under spectral variability.
//!
//! Every pixel is modeled as `r_n = (M ⊙ Ψ_n) α_n + e_n`: a convex combination
//! of reference endmember spectra `M`, each scaled band by band by a
//! nonnegative factor `Ψ_n`. The scaling tensor `Ψ` (rows × columns × bands ×
//! endmembers) is estimated first, as a low-rank CP tensor anchored on pure
//! pixels ([`variability`]). Abundances and per-pixel endmembers are then
//! estimated with a total-variation regularizer on the abundance maps
//! ([`unmixing`]).
//!
//! | module | content |
//! |---|---|
//! | [`tensor`] | 4-way tensors, CP decomposition by alternating least squares |
//! | [`extraction`] | spectral angle, VCA, pure-pixel selection |
//! | [`variability`] | scaling-factor estimation |
//! | [`unmixing`] | endmember and abundance updates, ADMM, FCLS |
//! | [`synthgen`] | seeded synthetic scenes with ground truth |
//! | [`metrics`] | RMSE, SAM, label matching |
//! | [`io`] | cube, tensor and CSV files, heatmaps |
//! | [`config`], [`pipeline`], [`cli`] | configuration, end-to-end runs, command line |
//!
//! ```no_run
//! use hyperunmix::config::RunConfig;
//!
//! let mut cfg = RunConfig::desk();
//! cfg.output_dir = "out/desk".into();
//! let report = hyperunmix::pipeline::run(&cfg)?;
//! println!("{}", report.metric("proposed").unwrap());
//! # Ok::<(), hyperunmix::error::Error>(())
//! ```

// Validation writes `!(x >= 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod extraction;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synthgen;
pub mod tensor;
pub mod unmixing;
pub mod variability;
