#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod body;
pub mod image;
pub mod render;
pub mod diffusion;
pub mod optim;
pub mod sds;
pub mod atlas;
pub mod harmonize;
pub mod metrics;
