//! Coupled integrate-and-fire model of contagion across the world's stock
//! exchanges.
//!
//! Every ordered pair of exchanges `(i, j)` carries an accumulated stress
//! `R^cum_ij`: the part of exchange `j`'s recent moves that exchange `i` has
//! not priced in yet. Small stresses are ignored. Once a stress exceeds the
//! threshold it enters `i`'s return at `i`'s next open or close and is reset,
//! which can push other stresses over the threshold and start a cascade
//! ("price-quake"). Because each reset is an explicit event, the cascades can
//! be traced edge by edge.
//!
//! Modules:
//! - [`market`]: exchange registry and the open/close event calendar.
//! - [`engine`]: stress tensor dynamics, simulation and replay of observed returns.
//! - [`detector`]: criticality marks, impact edges and quake assembly.
//! - [`stats`]: summary tables and log-binned distributions over quake records.
//! - [`calibration`]: maximum-likelihood grid search and residual diagnostics.
//! - [`ofc`]: the Olami-Feder-Christensen automaton as a scalar reference model.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. With `std`, calibration candidates are evaluated in parallel.
#![cfg_attr(not(feature = "std"), no_std)]
#![deny(rust_2018_idioms)]

extern crate alloc;

pub mod calibration;
pub mod detector;
pub mod engine;
mod error;
pub mod market;
pub mod ofc;
pub mod stats;

pub use error::{Error, Result};
pub use market::{ExchangeId, ExchangeSpec, MarketEvent, SessionKind};
