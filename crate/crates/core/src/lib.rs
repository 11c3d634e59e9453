//! Grid certification of expanding sets, shadowing and transitivity mechanisms for smooth
//! endomorphisms of the flat torus.
//!
//! Geometry, maps and linear algebra are generic over [`real::Real`]; the analysis layers work
//! in `f64`. The aliases below fix the scalar for everyday use.

pub mod arcs;
pub mod certificate;
pub mod cones;
pub mod error;
pub mod gallery;
pub mod linalg;
pub mod map;
pub mod real;
pub mod region;
pub mod shadow;
pub mod torus;
pub mod transit;

pub use certificate::{Certificate, Verdict};
pub use error::{Error, Result};

pub type TorusPoint = torus::TorusPoint<f64>;
pub type LiftPoint = torus::LiftPoint<f64>;
pub type BoxRegion = torus::BoxRegion<f64>;
pub type ArcPolyline = torus::ArcPolyline<f64>;
pub type MapSpec = map::MapSpec<f64>;
pub type Term = map::Term<f64>;
pub type Mat = linalg::Mat<f64>;
