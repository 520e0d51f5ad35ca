//! Compressed model storage: bit-packed relative-index streams and the
//! `SPNN` container used for both sparse exports and dense checkpoints.

mod bitpack;
mod container;
mod relative;

pub use bitpack::{pack, packed_len, unpack};
pub use container::{
    decode_model, default_index_bits, encode_model, export_model, export_model_with, import_model,
    load_checkpoint, save_checkpoint, write_atomic, Encoding, LayerStorage, StorageReport, MAGIC,
    VERSION,
};
pub use relative::{decode_relative, encode_dense, encode_relative, max_gap};
