//! Beam search and candidate re-ranking.

mod beam;
mod rerank;

pub use beam::{beam_search, greedy_decode, BeamConfig, DecoderState, Hypothesis, StepModel, TableModel, DEFAULT_BEAM_SIZE};
pub use rerank::{
    apply_weights, final_score, score_candidates, score_terms, select_final, write_rerank_report, Candidate, RerankRecord,
    RerankWeights, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_GAMMA,
};
