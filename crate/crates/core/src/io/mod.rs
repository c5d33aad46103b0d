//! File formats: `CCT1` tensors, record directories, toy-model JSON,
//! evaluation manifests, and overlay images.

mod manifest;
mod model;
mod overlay;
mod record;
mod tensor_file;

pub use manifest::{default_backend, load_manifest, ManifestEntry};
pub use model::{load_model_spec, save_model_spec, LayerDoc, ModelDoc};
pub use overlay::{load_image, overlay_checksum, render_overlay, save_png};
pub use record::{load_record, save_record, RecordManifest, RECORD_FILE};
pub use tensor_file::{
    decode_tensor, encode_tensor, load_tensor, save_tensor, tensor_checksum, Tensor, DTYPE_F32, MAGIC,
};
