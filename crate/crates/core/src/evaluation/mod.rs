//! Pair scoring, rank correlation, embedding diagnostics and whitening.

pub mod metrics;
pub mod plot;
pub mod scoring;
pub mod sts;
pub mod whitening;

pub use metrics::{alignment, midranks, srocc, uniformity};
pub use plot::{scatter_svg, PlotPoint};
pub use scoring::{embed_pair_sentences, evaluate, score_pairs, DiagnosticsReport, POSITIVE_GOLD};
pub use sts::{read_sts, write_sts, StsPair};
pub use whitening::{whitening, Whitener};
