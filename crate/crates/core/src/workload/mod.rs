//! Synthetic routing workloads: router popularity models, top-k token routing,
//! expert placements, data-condition token-stream transforms and calibrated
//! class presets.

mod generator;
mod placement;
mod presets;
mod routing;
mod transforms;

pub use generator::{generate_trace, GeneratorConfig, TraceSink};
pub use placement::{make_placement, PlacementScheme};
pub use presets::{
    calibrate_alpha, mean_reference_gini, preset, reference_gini, PresetClass, PresetParams,
    ReferenceScale,
};
pub use routing::{
    route_expert_loads, route_tokens, sample_popularity, DriftSchedule, RouterModel,
    TokenAssignments,
};
pub use transforms::{
    inverse_permutation, mock_stream, remap_vocab, shuffle_stream, unmap_vocab, vocab_permutation,
};
