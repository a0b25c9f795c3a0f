//! Mapping of neural-network layers onto fixed-size crossbar tiles.
//!
//! A network is lowered to one weight matrix per layer, cut into tile-sized
//! fragments, and the fragments are packed into as few tiles as possible —
//! densely (several fragments sharing a tile's lines) or in pipeline mode
//! (no two fragments share a row or column). The sweep evaluates candidate
//! tile geometries under an area model and reports the cheapest.

pub mod config;
pub mod cost;
mod error;
pub mod fragment;
pub mod network;
pub mod packing;
pub mod report;
pub mod sweep;

pub use error::{Error, Result};
