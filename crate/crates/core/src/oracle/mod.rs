//! Floating-point oracle, error metrics, reports and kernel sweeps.

mod e2e;
mod fp;
mod metrics;
mod report;
mod sweep;
pub mod tolerances;

pub use e2e::model_report;
pub use fp::{
    fp_forward, fp_forward_batch, fp_forward_traced, fp_gelu_erf, fp_gelu_sigmoid, fp_layernorm,
    fp_softmax, gelu_erf, gelu_sigmoid, GeluForm, Trace,
};
pub use metrics::{compare, compare_values, Metrics};
pub use report::{BaselineSlot, ErrorReport, SiteRecord, ToleranceCheck};
pub use sweep::{kernel_sweep, shiftmax_row_invariants, InputDist, KernelId, SweepSpec};
