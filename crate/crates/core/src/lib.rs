//! Narrative classification and evidence-grounded justification.
//!
//! The crate is organised along the processing pipeline:
//!
//! * [`taxonomy`]: the two-level narrative/sub-narrative label tree
//! * [`corpus`]: articles, gold annotations, splits and label matrices
//! * [`embedding`]: embedding backends and cosine similarity
//! * [`retrieval`]: sentence segmentation and dual-pass evidence retrieval
//! * [`classifier`]: focal-loss linear head with recall-oriented thresholds
//! * [`llm`]: chat backends, label refinement and explanation prompting
//! * [`evaluation`]: F1 reports and greedy-match generation scores
//! * [`pipeline`]: configuration and the `train`/`classify`/`explain`/`evaluate` drivers

pub mod classifier;
pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod http;
pub mod llm;
pub mod pipeline;
pub mod retrieval;
pub mod taxonomy;
