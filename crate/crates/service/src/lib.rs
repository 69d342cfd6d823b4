//! Annotation server.
//!
//! Annotators take a qualification test, then receive batches of up to five
//! sentence pairs to score with a 10,000-step slider. Raw slider integers are
//! appended to a JSONL event log; pairs whose first two responses differ by
//! more than 2000 steps are queued for a third annotator.
//!
//! | Method | Path | Body / query |
//! |---|---|---|
//! | POST | `/qualify` | `{annotator_id, responses: [raw, ...]}` |
//! | GET | `/qualification` | items to show in the test |
//! | GET | `/batch` | `?annotator_id=` |
//! | POST | `/batch/{batch_id}` | `{raws: [raw, ...], annotator_id?}` |
//! | GET | `/progress` | |
//! | GET | `/pairs/{id}` | |
//! | GET | `/scale` | `?stride=` sampled slider→probability table |

mod error;
mod http;
mod state;

pub use error::ServiceError;
pub use http::{router, serve, BatchResponse, QualifyRequest, SubmitRequest};
pub use state::{
    AnnotationService, PairStatus, PairView, Progress, ServedBatch, ServiceConfig, SubmitOutcome,
};

/// Environment variable consulted for the listen address.
pub const ADDR_ENV: &str = "UNLI_ADDR";
