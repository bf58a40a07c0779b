//! Nutrition estimation from meal titles and engagement modeling for food posts.
//!
//! The crate is organised as one module per pipeline stage:
//!
//! * [`food_db`]: food-composition database loading and validation
//! * [`embeddings`]: sentence vectors (precomputed EMBV1 files or a hashed fallback)
//! * [`matcher`]: similarity threshold calibration and nutrition estimates
//! * [`corpus`]: post ingestion, preprocessing, labels and control features
//! * [`textfeat`]: descriptor keywords, discriminator mining, hypothesis tests
//! * [`model`]: gradient-boosted trees, evaluation and tuning
//! * [`explain`]: Shapley-value explanations and their exports
//! * [`pipeline`]: end-to-end orchestration, reports and the synthetic fixture

pub mod corpus;
pub mod explain;
pub mod embeddings;
pub mod food_db;
pub mod matcher;
pub mod model;
pub mod pipeline;
pub mod textfeat;
