//! High-resolution backpropagation saliency through multi-scale
//! accumulation of layer activations and gradients.
//!
//! - [`resample`]: bilinear resizing of rasters and raster stacks.
//! - [`bridge`]: the [`Classifier`](bridge::Classifier) interface and its data types.
//! - [`nn`]: a small sequential CNN implementing that interface.
//! - [`saliency`]: the multi-scale method and the Grad-CAM baseline.
//! - [`metrics`]: pointing game and map densities.
//! - [`sanity`]: cascading randomization and adversarial correspondence.
//! - [`attack`]: targeted PGD with optional saliency-masked penalty.
//! - [`fixture`]: synthetic quadrant dataset and toy models.

pub mod attack;
pub mod bridge;
pub mod error;
pub mod fixture;
pub mod metrics;
pub mod nn;
pub mod resample;
pub mod saliency;
pub mod sanity;

pub use bridge::{Classifier, ImageTensor, LayerRef, LayerTensors, Prediction, Preprocessing};
pub use error::{Error, Result};
pub use resample::{Raster2D, RasterStack};
pub use saliency::{SaliencyMap, ScaleSchedule};
