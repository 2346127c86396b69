//! Downlink simulation of cell-free massive MIMO with conjugate beamforming.
//!
//! The crate covers the whole chain for one network realization ("drop"):
//! random AP and user placement on a wrap-around square ([`topology`]),
//! path loss and shadowing ([`propagation`]), pilot books and pilot
//! assignment ([`pilots`]), channel-estimate statistics and the closed-form
//! achievable rate ([`linkmodel`]), max-min power control ([`maxmin`]), a
//! small-cell baseline ([`smallcell`]) and a Monte-Carlo harness that turns
//! many drops into rate and throughput distributions ([`experiment`]).

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod linkmodel;
pub mod maxmin;
pub mod pilots;
pub mod propagation;
pub mod smallcell;
pub mod topology;

pub use error::{Error, Result};
