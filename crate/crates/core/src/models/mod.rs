//! The four recurrent architectures and greedy tagging.

mod arch;
mod context;
mod forward;
mod params;
mod tagging;

pub use arch::{Activation, Architecture, Direction, JordanFeed};
pub use context::{build_context, SequenceRun, StepContext};
pub use forward::{decide, hidden_elman, hidden_iplus, hidden_irnn, hidden_jordan, output_distribution, StepTrace};
pub use params::{param_count, CountDims, Dims, InputLayout, ParamCount, RnnParameters};
pub use tagging::{run_bidirectional, run_sequence, tag_bidirectional, tag_sequence, TaggerModel};
