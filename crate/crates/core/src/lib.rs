//! Finger minutiae tooling: an ISO/IEC 19794-2:2005 record codec, FVC-style
//! database ingestion, a reference minutiae matcher, the verification
//! evaluation protocol and the backend of a manual marking workflow.

pub mod cli;
pub mod codec;
pub mod dataset;
pub mod eval;
pub mod marking;
pub mod matcher;
pub mod synth;
