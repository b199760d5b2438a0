//! Container format, bit packing and reference-index Huffman coding.

pub mod bits;
pub mod container;
pub mod huffman;

pub use container::{compute_bpp, inspect, BitBreakdown, Container, Flags, InspectReport, Padding};
pub use huffman::HuffmanCode;
