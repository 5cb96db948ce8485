//! Permutation-equivariant neural functionals: networks whose inputs are the
//! weights of other networks.
//!
//! - [`wsdata`]: weight spaces, features, the neuron permutation action, file formats.
//! - [`orbits`]: brute-force orbit enumeration certifying the closed-form layers.
//! - [`nflayers`]: NP / HNP / pointwise NF-Layers, pooling, IO encoding, models.
//! - [`train`]: losses, Adam, Kendall's tau, training loops, gradient checks.
//! - [`siren`]: SIREN evaluation and fitting, data generation, weight editing.
//! - [`selftest`]: the property suite behind `nfkit selftest`.

pub mod error;
pub mod nflayers;
pub mod orbits;
pub mod selftest;
pub mod siren;
pub mod train;
pub mod wsdata;

pub use error::{Error, Result};
pub use nflayers::{EquivariantLayer, LayerFamily, Nfn, NfnConfig, NfnOutput, TaskHead};
pub use orbits::SharingScheme;
pub use wsdata::{GroupTag, InitKind, NeuronPermutation, WeightSpaceFeature, WeightSpaceSpec};
