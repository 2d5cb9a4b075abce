//! Secure federated prompt personalization.
//!
//! The crate simulates users and a server that jointly personalize soft
//! prompts while only ever revealing coded squared distances, cluster
//! membership and cluster-wise aggregates to the server:
//!
//! - [`field`]: prime-field arithmetic and fixed-point quantization,
//! - [`lcc`]: Lagrange coded computing (sharing, erasure and error decoding),
//! - [`reduce`]: projection of prompts to the low-dimensional vectors that are clustered,
//! - [`cluster`]: secure one-shot adaptive clustering over coded distances,
//! - [`protocol`]: the round loop, secure aggregation and the audit transcript,
//! - [`infotheory`]: leakage analysis (special functions, KSG estimation),
//! - [`bench`]: per-phase cost measurement.

pub mod field;
pub mod lcc;
pub mod protocol;
pub mod cluster;
pub mod reduce;
pub mod infotheory;
pub mod bench;
