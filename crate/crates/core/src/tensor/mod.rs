//! Dense arrays and a reverse-mode autodiff tape.

mod array;
mod gradcheck;
mod params;
mod tape;

pub use array::{Array, Real};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use params::{ParamId, ParamSet};
pub use tape::{sigmoid, BackwardFn, Gradients, Tape, Var};

pub(crate) use array::softmax_rows;
