pub mod corpus;
pub mod error;
pub mod evalmetrics;
pub mod experiment;
pub mod irrelevance;
pub mod markers;
pub mod model;
pub mod numeric;
pub mod ontology;
pub mod outparse;
pub mod pipeline;
pub mod prefix;
pub mod promptgen;
pub mod record;
pub mod seq2seq;
pub mod trainer;

pub use error::{Error, Result};
