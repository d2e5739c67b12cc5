//! Forward and backward primitives.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod linear;
pub mod loss;
pub mod pool;
pub mod shuffle;

pub use activation::{relu, relu_backward, relu_calls, relu_sign_digest_begin, relu_sign_digest_end};
pub use batchnorm::{BatchNormCache, BatchNormGrads, BatchNormLayer, BN_EPSILON, BN_MOMENTUM};
pub use conv::{conv_backward, conv_forward, ConvGrads, ConvLayer, ConvSpec};
pub use linear::{LinearGrads, LinearLayer};
pub use loss::{argmax, softmax_cross_entropy};
pub use pool::{avgpool_backward, avgpool_forward};
pub use shuffle::{channel_shuffle, channel_shuffle_backward, shuffle_permutation};
