//! Simulator for group-sequential secure aggregation over a prime field.
//!
//! Users secret-share masked models inside groups of `T + D + 1`, partial
//! sums travel along chains of equal-position users across groups, and the
//! server interpolates the exact sum of contributing models from any
//! `T + 1` uploads. The [`simnet`] harness accounts communication loads and
//! captures adversary views; [`privacy_oracle`] decides exact conditional
//! independence of those views on tiny instances by enumeration.
//!
//! ```
//! use std::collections::BTreeSet;
//! use swiftagg::{protocol::run_protocol, FieldSpec, ModelVector, ProtocolParams};
//!
//! let field = FieldSpec::new((1 << 31) - 1)?;
//! let params = ProtocolParams::new(12, 2, 1, 2, field)?;
//! let models: Vec<_> = (1..=12)
//!     .map(|n| ModelVector::new(field, vec![n, 1000 + n]))
//!     .collect::<Result<_, _>>()?;
//! let (recovered, _log) = run_protocol(&params, &models, &BTreeSet::from([7]), 12)?;
//! assert_eq!(recovered.values(), &[71, 11_071]);
//! # Ok::<(), swiftagg::Error>(())
//! ```

pub mod error;
pub mod field;
pub mod privacy_oracle;
pub mod protocol;
pub mod sharing;
pub mod simnet;

pub use error::{Error, Result};
pub use field::{EvalPoint, FieldElement, FieldSpec, ModelVector};
pub use protocol::{DropoutTiming, GroupPosition, MessageLog, ProtocolMessage, ProtocolParams};
pub use simnet::{AdversaryConfig, DropoutPlan, RunMetrics};
