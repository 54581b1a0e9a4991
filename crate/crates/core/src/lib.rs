//! Rigid multimeric docking as a cooperative game.
//!
//! Chains of an assembly are agents whose actions are roto-translations of
//! their own point clouds; docked structures are equilibria of a shared
//! potential. The crate provides two routes to those equilibria:
//!
//! * gradient play: simultaneous (or round-robin) Riemannian gradient
//!   descent of all mobile chains against a potential plus a contact-distance
//!   penalty ([`game`]);
//! * diffusion sampling: reverse geodesic random walks on the product space
//!   `(SO(3) x T(3))^(N-1)` driven by exact score oracles ([`sampler`]),
//!   with the isotropic Gaussian on SO(3) as the rotational transition
//!   kernel ([`igso3`]).
//!
//! Potentials are analytic and desk-verifiable: a smooth contact potential
//! stands in for physics-based scoring, and a linear surrogate over soft
//! inter-chain distance histograms is trained with a pairwise ranking loss
//! ([`potential`]). Geometry primitives (rotation algebra, the disentangled
//! group action, Kabsch alignment, TM-score) live in [`geom`]; the assembly
//! data model and on-disk formats in [`structio`]; noise schedules and
//! forward kernels in [`schedule`].
//!
//! Everything stochastic takes an explicit seed and draws from per-item
//! ChaCha8 streams, so batch results are bit-identical whether they run
//! sequentially or on the rayon pool (see [`exec`]).

pub mod error;
pub mod exec;
pub mod game;
pub mod geom;
pub mod igso3;
pub mod potential;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod structio;

pub use error::{Error, Result};
