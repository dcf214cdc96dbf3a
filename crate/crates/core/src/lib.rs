//! Autonomous aesthetic photo capture in procedural scenes.
//!
//! The crate is organised bottom-up:
//!
//! - [`scene`]: procedural rooms, a latent aesthetic field and a ray-cast camera.
//! - [`netcore`]: dense/LSTM networks with exact reverse-mode gradients and Adam.
//! - [`aesthetics`]: the learned view scorer and its ranking/robustness losses.
//! - [`pomdp`]: the capture environment, adaptive threshold and shaped reward.
//! - [`policy`]: recurrent actor-critic trained with clipped policy optimisation.
//! - [`baselines`]: random, rule-of-thirds, greedy, key-frame and imitation policies.
//! - [`harness`]: paired evaluation, ablations and trajectory rendering.
//! - [`config`] and [`cli`]: run configuration and the `autophoto` command line.

pub mod scene;
pub mod seed;
pub mod netcore;
pub mod aesthetics;
pub mod pomdp;
pub mod policy;
pub mod baselines;
pub mod harness;
pub mod config;
pub mod cli;

pub const VERSION: &str = concat!("autophoto ", env!("CARGO_PKG_VERSION"));
