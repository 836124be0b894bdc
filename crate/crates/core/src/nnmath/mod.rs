//! Numeric substrate: dense and CSR kernels, parameter storage, Adam and a
//! finite-difference gradient checker. Everything runs in `f64`.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod params;
pub mod sparse;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use dense::{
    matmul, matmul_nt, matmul_tn, relu, relu_grad, row_dot, sigmoid, softplus, DenseMatrix,
};
pub use gradcheck::{finite_difference_check, GradCheckConfig, GradCheckReport};
pub use init::{derive_seed, xavier_bound, xavier_init, xavier_with_fans};
pub use params::{ParamStore, ParamTensor};
pub use sparse::{spgemm, spmm, spmm_tn, CsrMatrix};
