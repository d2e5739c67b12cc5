//! Successive-depthwise-convolution networks on CPU.
//!
//! The crate contains a small dense-tensor engine with hand-written backward
//! passes ([`ops`]), the three SdcBlock variants ([`block`]), the SdcNet
//! stage tables ([`net`]), a static multiply-add and parameter counter
//! ([`analysis`]), a CIFAR binary-format loader with pad/crop/flip
//! augmentation ([`data`]), and an SGD trainer with checkpointing and a
//! finite-difference gradient checker ([`train`]).

pub mod analysis;
pub mod block;
pub mod data;
pub mod error;
pub mod net;
pub mod ops;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use params::{Gradients, ParamRole, Parameterized};
pub use rng::Rng;
pub use tensor::{Precision, Scalar, Shape4, Tensor};
