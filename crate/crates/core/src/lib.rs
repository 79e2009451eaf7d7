// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod baselm;
pub mod corpus;
pub mod harness;
pub mod metrics;
pub mod numkern;
pub mod rng;
pub mod sae;
pub mod steer;
