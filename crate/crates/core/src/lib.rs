//! Stability-change prediction by fusing simulated and experimental ΔΔG
//! values in a Gaussian-process model over contact-graph kernels.

pub mod amino;
pub mod calibrate;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod gp;
pub mod kernel;
pub mod optim;
pub mod pipeline;
pub mod structio;
pub mod submat;
pub mod synth;

pub use amino::AminoAcid;
pub use error::{Error, Result};

/// Mixes a root seed with stream indices (protein, fold, repeat, ...) so that
/// independent jobs draw from unrelated generators.
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    stream.iter().fold(mix(base), |acc, &s| mix(acc ^ mix(s)))
}
