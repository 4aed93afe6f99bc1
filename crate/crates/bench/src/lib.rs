//! Shared fixtures for the benchmarks.

use fsg_core::synth::{generate_named, render_stream, NoiseProfile};
use fsg_core::{FramePacket, GroundTruthScene};

/// Scene and noisy packet stream for `recipe`.
pub fn noisy_stream(
    recipe: &str,
    seed: u64,
    frames: usize,
) -> (GroundTruthScene, Vec<FramePacket>) {
    let scene = generate_named(recipe, seed).expect("shipped recipe");
    let packets = render_stream(&scene, &NoiseProfile::noisy(seed), frames).expect("valid profile");
    (scene, packets)
}
