//! IoT payment channels co-controlled by the device and an untrusted
//! gateway through two-party threshold ECDSA.

pub mod chain_sim;
pub mod channel;
pub mod codec;
pub mod ecdsa;
pub mod group;
pub mod nodes;
pub mod scenario;
pub mod threshold_ecdsa;
pub mod wire;
