//! Model specifications, fitting by kind, and versioned model bundles.

mod bundle;
mod pipeline;
mod spec;

pub use bundle::{fit_model, FittedModel, InSample, ModelBundle, BUNDLE_FORMAT};
pub use pipeline::{ModelPipeline, SelectionStep};
pub use spec::{BandwidthSpec, ModelKind, ModelSpec};
