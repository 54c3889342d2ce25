//! Dense tensors, reverse-mode autodiff and the LSTM cell.

mod gradcheck;
pub mod init;
pub mod lstm;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error};
pub use init::{derive_seed, ParamRng};
pub use lstm::{lstm_cell, LstmVars, LstmWeights};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{
    dot, log_add_exp, log_softmax, log_softmax_in_place, log_sum_exp, matmul_acc, sigmoid, softmax,
    softmax_in_place, vec_mat, Tensor,
};
