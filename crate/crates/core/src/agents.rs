//! The three pipeline agents: planner, specialists, and supervisor.

pub mod planner;
pub mod specialist;
pub mod supervisor;

pub use planner::{plan, PlannerError, PlannerOutput, DEFAULT_BLUEPRINT_CAP};
pub use specialist::{evaluate, SpecialistError, SpecialistReport};
pub use supervisor::{
    aggregate_deterministic, aggregate_llm, f2_score, support_count, AggregationTrace,
    ImportanceWeights, LlmSupervisorMode, SupervisorError, WeightSource,
};
