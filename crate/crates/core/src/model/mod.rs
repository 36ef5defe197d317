//! Segmentation network, its analytic profile and checkpoint format.

pub mod blocks;
pub mod checkpoint;
pub mod net;
pub mod plan;
pub mod profile;

pub use blocks::{DecoderBlock, EncoderBlock, ResVss, ResVssConfig, VssSite};
pub use net::{ForwardTrace, ModelConfig, SegNet, Variant};
pub use plan::{Stage, StagePlan, NUM_STAGES, REQUIRED_DIVISOR};
pub use profile::{attention_params, count_flops, count_params, profile, LayerProfile, Profile};
