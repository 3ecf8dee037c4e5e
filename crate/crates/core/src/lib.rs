pub mod analysis;
pub mod harness;
pub mod optimizers;
pub mod problems;
pub mod scoring;
pub mod seed;
pub mod space;
