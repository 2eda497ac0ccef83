pub mod checksum;
pub mod encoder;
pub mod engine;
pub mod eval;
pub mod npy;
pub mod scoring;
pub mod store;
