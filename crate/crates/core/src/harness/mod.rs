//! End-to-end evaluation: datasets, modality transfer, prompting, model
//! clients, answer extraction, scoring, timing and run comparison.

mod client;
mod compare;
mod dataset;
mod extract;
mod prompt;
mod run;
mod task;

pub use client::{request_body, EndpointConfig, HttpClient, MockBehavior, MockClient, ModelClient, ModelResponse, RetryPolicy, Usage};
pub use compare::{compare_runs, overhead_rows, timing_records, ComparisonTable, DeltaRow, OverheadRow, ScoreSheet, TaskScore};
pub use dataset::{example_seed, load_dataset, Dataset, Example};
pub use extract::{extract_answer, Extraction, Rule, EXTRACTION_RULES_VERSION};
pub use prompt::{
    build_prompt, transfer_modality, Assets, GenerationSettings, ModalityMode, Part, PayloadMeta, PromptPayload,
    PromptStyle, RenderConfig, COT_SUFFIX, IMAGE_INSTRUCTION,
};
pub use run::{aggregate, run_eval, run_modes, Aggregates, EvalConfig, PatchCounts, Record, RecordStatus, RunReport, TaskAggregate, TimingMode};
pub use task::{Metric, TaskKind, TaskRegistry, TaskSpec};
