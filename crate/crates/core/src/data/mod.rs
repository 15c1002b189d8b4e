//! Image sets, CIFAR-10 binary ingestion, stratified splits and the
//! label-derived similarity oracle.

mod cifar;
mod similarity;
mod split;
pub mod synthetic;

pub use cifar::{
    load_cifar10, load_cifar_file, write_cifar_file, CifarPart, LabeledImageSet, IMAGE_BYTES, RECORD_BYTES,
};
pub use similarity::SimilarityOracle;
pub use split::{make_split, read_manifest, write_manifest, Split, SplitSpec};
