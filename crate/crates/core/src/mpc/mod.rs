//! Two-party additive secret sharing with a trusted dealer.

pub mod channel;
pub mod dealer;
pub mod ledger;
pub mod protocol;
pub mod share;

pub use channel::{Channel, BYTES_PER_ELEMENT};
pub use dealer::{BeaverTriple, Dealer, MatrixTriple, ProductKind, Triple};
pub use ledger::{Category, Clock, CommLedger, Counters, NullClock};
pub use protocol::{beaver_mul, beaver_mul_raw, matmul_shared, open, open_both, MaskedTensor, Mpc, Operand};
pub use share::{
    add_public, add_public_scalar, add_shared, mul_public, mul_public_raw, mul_public_scalar, reconstruct, share,
    share_with, Party, Share, SharedTensor,
};
