//! Shortest-path distance encodings, truncated diffusion coordinates, and the
//! monotone link, trilateration, and Nyström machinery connecting them.

pub mod encodings;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod linkage;
pub mod nystrom;
pub mod spectral;
pub mod trilateration;

pub use error::{Error, Result};
pub use graph::{DistanceMatrix, EdgeCleanup, Graph, Hop, UNREACHABLE};
pub use linkage::{LinkSample, LinkageReport, MonotoneLink, PairScope, RadialKind, RadiusRule};
pub use nystrom::{CrossMode, NystromConfig};
pub use spectral::{DiffusionEmbedding, EigenSystem, LaplacianMode};
pub use trilateration::{AnchorSet, AnchorStrategy, TrilaterationSystem};
