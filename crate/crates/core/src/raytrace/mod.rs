//! Sequential ray tracing through lens assemblies, spot diagrams and
//! electrode shadowing.

mod assembly;
mod clipping;
mod trace;

pub use assembly::{Element, OpticalAssembly};
pub use clipping::{rod_clipping, ClippingEstimate};
pub use trace::{
    intersect, trace, BundleLayout, Ray, Reference, Sampling, SourceSpec, SpotDiagram,
    TracedBundle, WavefrontSample,
};
