//! Readable, multi-page-consistent document backgrounds.
//!
//! The core is generic over the scalar type (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the pipeline and CLI use.

pub mod aro;
pub mod color;
pub mod compose;
pub mod geometry;
pub mod latentmask;
pub mod layout;
pub mod narrative;
pub mod pipeline;
pub mod raster;
pub mod scalar;

pub use scalar::Scalar;

pub type BBox = geometry::Rect<f64>;
pub type Srgb = color::Rgb<f64>;
pub type Luminance = color::Luminance<f64>;
pub use raster::Raster;
pub type TextLine = layout::TextLine<f64>;
pub type PageLayout = layout::PageLayout<f64>;
pub type Region = layout::Region<f64>;
pub type ExtractionParams = layout::ExtractionParams<f64>;
pub type AroParams = aro::AroParams<f64>;
pub type BackingOverlay = aro::BackingOverlay<f64>;
pub type AttenuationMask = latentmask::AttenuationMask<f64>;
pub type ReadabilityReport = compose::ReadabilityReport<f64>;
