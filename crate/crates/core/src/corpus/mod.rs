//! Deterministic multi-domain synthetic corpus: generation, domain
//! transforms, trial-list construction and file formats.

pub mod gen;
pub mod io;
pub mod spec;
pub mod store;
pub mod trials;

pub use gen::{domain_transform, generate_corpus};
pub use spec::{CorpusSpec, DomainParams};
pub use store::{Corpus, Utterance};
pub use trials::{make_trials, TrialProtocol};
