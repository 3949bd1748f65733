pub mod fit;
pub mod moments;
pub mod ppc;
pub mod replay;
pub mod simulate;
pub mod stats;
pub mod study;
