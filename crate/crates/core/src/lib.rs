//! Conceptor-synchronized class activation maps.
//!
//! A CNN feature map `F` (`M` positions by `K` channels) and per-channel
//! weights yield a positive evidence matrix `Z = F·diag(w)` and a
//! pseudo-negative one `Z̄ = F·diag(1 − w)`. Each is summarized by a
//! conceptor, and the channel responses are synchronized through
//! `C`, its complement `C* = ¬C̄`, or their mean before being rendered as a
//! saliency map at input resolution.
//!
//! ```
//! use conceptor_cam::cam::{saliency, ChannelWeights, FeatureMap, SaliencyMode, WeightScheme};
//! use conceptor_cam::tensor::Matrix;
//!
//! let f = FeatureMap::new(
//!     Matrix::from_rows(&[[1.0, 0.0], [0.5, 0.5], [0.0, 1.0], [0.2, 0.1]]).unwrap(),
//!     (2, 2),
//! )
//! .unwrap();
//! let w = ChannelWeights::new(vec![0.9, 0.1], WeightScheme::Ingested).unwrap();
//! let (map, _) = saliency(&f, &w, SaliencyMode::Comprehensive, 1.0, (8, 8)).unwrap();
//! assert_eq!((map.height(), map.width()), (8, 8));
//! ```

pub mod backend;
pub mod cam;
pub mod cli;
pub mod conceptor;
pub mod error;
pub mod explain;
pub mod input;
pub mod io;
pub mod metrics;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
