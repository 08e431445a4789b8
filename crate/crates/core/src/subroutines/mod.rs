//! Register-level implementations of the reflections used to evaluate P_A, with oracle counts.

pub mod pa;
pub mod sim;
pub mod subspace;

pub use sim::{ChildCtx, Circuit, Ctx, Key, State, Trace};
pub use subspace::{check_subroutines, circuit_unitary, implementing_subspace, subspace_report, CircuitCheck, SubroutineReport};
