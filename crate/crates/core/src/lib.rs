//! Multi-label ranking classification of ambiguous user requests with
//! positive-unlabeled (PU) learning and label propagation.
//!
//! A request is encoded as the mean of its token embeddings and scored against
//! every category by a linear layer. Training minimises a rank-weighted ramp
//! loss, either treating all unannotated categories as negatives (PN) or with
//! weighted pseudo-labels propagated from annotated neighbours (PU).

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod objective;
pub mod pipeline;
pub mod propagation;

pub use error::{Error, Result};
