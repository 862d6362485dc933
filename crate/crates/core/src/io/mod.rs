//! Readers and writers for every on-disk artifact.

mod binary;
mod checkpoint;
mod ranked;
mod records;
mod words;

pub use binary::{
    decode_dense, decode_sparse, encode_dense, encode_sparse, read_dense_set, read_sparse_set,
    write_dense_set, write_sparse_set, DENSE_MAGIC, FORMAT_VERSION, SPARSE_MAGIC,
};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_biencoder, load_checkpoint, load_sae,
    save_checkpoint, Checkpoint, BIENCODER_MAGIC, SAE_MAGIC,
};
pub use ranked::{encode_run, parse_run, read_run};
pub use records::{
    encode_captions, encode_labels, encode_queries, parse_captions, parse_labels, parse_queries,
    read_captions, read_labels, read_queries, CaptionRecord, LabeledImage,
};
pub use words::{encode_word_vectors, parse_word_vectors, read_word_vectors};
