//! Shared inputs for the benchmarks.

use toothfuse::implicit::{NetworkShape, SdfNetwork};
use toothfuse::pipeline::{synth_tooth, SynthSettings, SyntheticTooth, SyntheticToothSpec};

/// A held-out synthetic tooth with default degradation.
pub fn tooth(seed: u64) -> SyntheticTooth {
    synth_tooth(&SyntheticToothSpec::from_seed(seed, &SynthSettings::default())).expect("synthetic tooth")
}

/// Untrained decoder of the default shape, initialized to a sphere.
pub fn decoder() -> SdfNetwork {
    SdfNetwork::geometric_init(NetworkShape::default(), 0.5, 0)
}
