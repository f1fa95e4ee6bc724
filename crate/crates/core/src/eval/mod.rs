//! EER/DET, streaming event matching and the evaluation protocols.

mod eer;
mod events;
mod protocols;

pub use eer::{compute_eer, det_csv, det_curve, DetPoint, EerResult};
pub use events::{
    fa_per_hour, fnr_at_fa, match_events, stream_sweep, sweep_csv, FnrAtFa, GroundTruthEvent, MatchCounts, ScoredStream,
    SweepPoint, MATCH_TOLERANCE,
};
pub use protocols::{
    build_kws_stream, build_search_stream, classification_protocol, AlignedSentence, KeywordResult, LabeledEmbedding,
    ProtocolResult, StreamTestSet,
};
