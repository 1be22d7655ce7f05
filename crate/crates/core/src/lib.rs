//! Integer-only Vision Transformer inference.
//!
//! Linear layers run as 8-bit integer products with 32-bit accumulation and
//! dyadic (`b / 2^c`) requantization. Softmax, GELU and LayerNorm are
//! replaced by integer approximations built from shifts, one integer
//! division and a fixed-iteration integer square root. A 64-bit floating
//! point oracle of the same network, plus comparison and sweep tooling,
//! measures how far the integer path drifts.

pub mod audit;
pub mod engine;
pub mod error;
pub mod intmath;
pub mod itns;
pub mod kernels;
pub mod oracle;
pub mod quant;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{FpTensor, QTensor};
