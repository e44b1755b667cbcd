//! Pricing mechanisms: penalties on the deviation from the average
//! parameter, truthfulness rewards and a flat compensation payment.

mod complete;
mod incomplete;
mod prices;
mod scheme;

pub use complete::*;
pub use incomplete::*;
pub use prices::*;
pub use scheme::*;
