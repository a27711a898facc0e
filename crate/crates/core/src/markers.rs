//! Reserved marker strings shared by prompt construction, the vocabulary
//! and the output parser.

pub const TRG: &str = "<trg>";
pub const ARG: &str = "<arg>";
pub const IN_SEP: &str = "<IN_SEP>";
pub const OUT_SEP: &str = "<OUT_SEP>";
pub const SEP: &str = "[SEP]";
pub const TRIGGER_WORD: &str = "Trigger";
