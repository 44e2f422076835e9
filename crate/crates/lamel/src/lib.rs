//! Linear meta-learning over ridge regression, with graphlet molecular
//! fingerprints and the few-shot experiment machinery built around them.
//!
//! The pipeline: SMILES strings are parsed into molecular graphs
//! ([`molgraph`]), every connected subgraph up to a size cap is enumerated and
//! canonicalized into count fingerprints ([`graphlets`]), fingerprints are
//! stacked into sparse feature matrices shared across prediction tasks
//! ([`taskdata`]), ridge models are fitted per task ([`linmodel`]), and the
//! meta-learner combines support-task models into a specialization model for
//! a new target task from a handful of labeled shots ([`meta`]). Metrics and
//! task-similarity analysis live in [`analysis`].

pub mod analysis;
pub mod bruteforce;
pub mod graphlets;
pub mod linmodel;
pub mod meta;
pub mod molgraph;
pub mod taskdata;
pub mod util;
