//! Deterministic synthetic camera: scene description, renderer, frame I/O
//! and the discrete region-moment oracle.

mod frame;
mod moments;
mod render;
mod scene;

pub use frame::{BinaryMask, Frame};
pub use moments::{ellipse_from_moments, rasterize_ellipse, region_moments_oracle, RegionMoments};
pub use render::{render, render_labeled, splitmix, Label, RenderOutput};
pub use scene::{
    BackgroundConfig, DiseaseConfig, IlluminationSchedule, LightConfig, Occluder, OccluderFrame,
    SceneConfig, SpecularConfig, WindConfig,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("malformed PGM: {0}")]
    BadPgm(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
