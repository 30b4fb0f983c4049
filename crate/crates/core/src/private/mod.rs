//! Encrypted generation: all four model variants executed under the
//! two-party protocol with per-category accounting.
//!
//! | variant  | embedding                | blocks                   | sampling        |
//! |----------|--------------------------|--------------------------|-----------------|
//! | Vanilla  | whole sequence, per step | softmax attention        | per step        |
//! | OnlyER   | prefix only              | softmax attention        | batched at end  |
//! | OnlyMM   | whole sequence, per step | merge modules            | per step        |
//! | ER_MM    | prefix only              | merge modules, one row   | batched at end  |
//!
//! Sampling opens the logits to the client, who takes the argmax locally.
//! The server never sees a token, but the client learns full logit vectors.

mod forward;
mod report;
mod session;

pub use forward::mpc_embed;
pub use report::{fraction, ledger_report, ReportRow};
pub use session::{EncryptedSession, GenerationOutput, SessionModel, SessionOptions, Variant};

#[cfg(test)]
mod tests;
