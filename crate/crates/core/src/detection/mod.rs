//! Detector model, polarization analyzers and the coincidence engine.

pub mod analyzer;
pub mod coincidence;
pub mod detector;

pub use analyzer::{analyzer_outcome, joint_pass_probability, pass_probability, AnalyzerRecord};
pub use coincidence::{
    accidental_estimate, count_coincidences, delta_histogram, pair_coincidences, Coincidence,
    CoincidenceResult, DeltaHistogram,
};
pub use detector::{
    detect, detect_stream, generate_dark_counts, DetectorId, DetectorSpec, DetectorState, TagOrigin,
    TimeTag,
};
