//! Keyframe management and per-step training sample generation.

mod batch;
mod keyframes;

pub use batch::{
    clamp_alpha, generate_batch, read_batch_dump, write_batch_dump, DumpRecord, FreeSample,
    PerturbedSample, SampleBatch, SamplingConfig, BATCH_MAGIC, TAG_FREE, TAG_SURFACE,
};
pub use keyframes::{iou, Keyframe, KeyframeStore, OctantSet};
