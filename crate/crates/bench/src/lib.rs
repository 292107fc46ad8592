//! Fixtures shared by the criterion benches.

use std::sync::Arc;

use invdecomp::{BuiltinKernel, IndexSpace, Kernel};

/// Watson kernel on the reversal-invariant midpoint grid with `n` points.
pub fn watson_kernel(n: usize) -> Kernel {
    let space = Arc::new(IndexSpace::interval_with_reversal(n).expect("grid"));
    Kernel::builtin(BuiltinKernel::Watson, space).expect("kernel")
}

/// Compensated sheet on an `n × n` product grid.
pub fn sheet_kernel(n: usize) -> Kernel {
    let axis = Arc::new(IndexSpace::interval_with_reversal(n).expect("grid"));
    let space = Arc::new(IndexSpace::product(&[Arc::clone(&axis), axis], true).expect("grid"));
    Kernel::builtin(BuiltinKernel::SheetCompensated, space).expect("kernel")
}
