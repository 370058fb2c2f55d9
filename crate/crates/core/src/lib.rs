pub mod accessibility;
pub mod calibration;
pub mod cube;
pub mod dasymetric;
pub mod fixture;
mod framing;
pub mod geojson;
pub mod geometry;
pub mod network;
pub mod numeric;
pub mod pipeline;
pub mod temporal;

pub use framing::FrameError;
