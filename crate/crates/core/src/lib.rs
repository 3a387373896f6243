//! Rate-matched product-matrix regenerating codes for distributed storage
//! with Byzantine nodes.
//!
//! Layers, bottom to top: finite-field arithmetic ([`galois`]), dense linear
//! algebra ([`linalg`]), Reed–Solomon evaluation codes ([`rs_codec`]), the
//! full-rate and fractional-rate product-matrix codes ([`component_codes`]),
//! the 2-layer and m-layer rate-matched schemes ([`two_layer`],
//! [`m_layer`]), and a deterministic hostile-network simulator
//! ([`hostile_net`]).

pub mod component_codes;
pub mod galois;
pub mod hostile_net;
pub mod linalg;
pub mod m_layer;
pub mod rs_codec;
pub mod two_layer;

pub use component_codes::{
    CodeError, CodeKind, CodeParams, EncoderMatrices, MessageBlock, ShareMatrix,
};
pub use galois::{Elem, Field, FieldError};
pub use linalg::{LinalgError, Matrix};
pub use rs_codec::{CodecError, DecodeOutcome, EvalCode};
