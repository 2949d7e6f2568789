//! Numerical laboratory for Dirichlet-Laplacian eigenvalues on rasterized
//! domains: eigensolver, tail and interior domain surgery, the boundedness
//! pipeline, splitting certificates for `λ_k/λ_1`, and spectral shape
//! optimization at fixed measure.

pub mod bessel;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod optimize;
pub mod pipeline;
pub mod ratio_bound;
pub mod sgrid;
pub mod shapes;
pub mod spectral;
pub mod surgery;

pub use error::{Error, Result};
pub use grid::{BoundingBox, Cell, GridDomain, GridSpec, Section, Side, Slice, SliceSelector};
pub use spectral::{DirichletOperator, RayleighReport, SolverConfig, Spectrum};
