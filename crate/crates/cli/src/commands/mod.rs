pub mod detect;
pub mod eval;
pub mod gradcheck;
pub mod grid;
pub mod render;
pub mod synth;
pub mod train;
