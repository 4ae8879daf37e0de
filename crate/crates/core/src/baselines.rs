//! Comparison systems: the single agent with k runs plus self-reflection,
//! and the three-phase debate committee.

pub mod debate;
pub mod single;

pub use debate::{
    peer_scores_leaked, run_debate, DebateError, DebateEvaluation, DebateTranscript, FirmScores,
};
pub use single::{run_single, SingleAgentConfig, SingleAgentError, SingleRunOutcome};
