//! Description-driven dialogue state tracking data toolkit.
//!
//! The pipeline is: load schemata ([`schema`]) and dialogues ([`corpus`]),
//! compile each user turn into an indexed-description input and an indexed
//! state target ([`prompt`]), parse generated text back into canonical states
//! ([`parse`]), and score them ([`metrics`]). [`splits`] builds the few-shot and
//! leave-one-out data regimes and [`oracle`] synthesises predictions from gold
//! for calibrating the rest of the pipeline.

pub mod corpus;
pub mod jsonl;
pub mod metrics;
pub mod oracle;
pub mod parse;
pub mod prompt;
pub mod rng;
pub mod schema;
pub mod splits;

pub use corpus::{Dialogue, DialogueTurn, Speaker, TurnState, Utterance};
pub use metrics::{EvalReport, Normalizer, SensitivityReport, TurnResult};
pub use oracle::{CorruptionMode, CorruptionSpec};
pub use parse::{DecodeError, DecodeMode, DecodedState, ParsedPrediction};
pub use prompt::{CompileOptions, CompiledExample, IndexAssignment, PrefixScope};
pub use schema::{Catalog, DescriptionStyle, IntentDef, Schema, SlotDef};
pub use splits::{SplitKind, SplitManifest, SplitSpec};
