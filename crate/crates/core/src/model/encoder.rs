//! Node encoders: a nonlinear input projection followed by `L` propagation
//! layers, each `H' = ReLU(A H W + b)` (GCN) or `H' = ReLU(H W + b)` (MLP).

use crate::error::Result;
use crate::metapath::FeatureMatrix;
use crate::nnmath::dense::{relu_backward, relu_matrix};
use crate::nnmath::{matmul, matmul_nt, matmul_tn, spmm, spmm_tn, CsrMatrix, DenseMatrix};

/// Forward activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    /// Pre-activation of the input projection.
    pub proj_pre: DenseMatrix,
    /// Per layer: the propagated input (`A H` or `H`) and the pre-activation.
    pub layers: Vec<(DenseMatrix, DenseMatrix)>,
    pub output: DenseMatrix,
}

/// Parameters of one encoder pass, borrowed from the store.
pub struct EncoderParams<'a> {
    pub proj_w: &'a DenseMatrix,
    pub proj_b: &'a DenseMatrix,
    pub layers: Vec<(&'a DenseMatrix, &'a DenseMatrix)>,
}

/// Gradients for one encoder pass, shaped like [`EncoderParams`].
#[derive(Clone, Debug)]
pub struct EncoderGrads {
    pub proj_w: DenseMatrix,
    pub proj_b: DenseMatrix,
    pub layers: Vec<(DenseMatrix, DenseMatrix)>,
}

fn project(feat: &FeatureMatrix, w: &DenseMatrix) -> Result<DenseMatrix> {
    match feat {
        FeatureMatrix::Dense(x) => matmul(x, w),
        FeatureMatrix::Sparse(x) => spmm(x, w),
    }
}

fn project_back(feat: &FeatureMatrix, upstream: &DenseMatrix) -> Result<DenseMatrix> {
    match feat {
        FeatureMatrix::Dense(x) => matmul_tn(x, upstream),
        FeatureMatrix::Sparse(x) => spmm_tn(x, upstream),
    }
}

/// Runs the encoder. `adjacency = None` gives the MLP variant.
pub fn encode(
    feat: &FeatureMatrix,
    adjacency: Option<&CsrMatrix>,
    params: &EncoderParams<'_>,
) -> Result<EncoderTrace> {
    let mut proj_pre = project(feat, params.proj_w)?;
    proj_pre.add_row_broadcast(params.proj_b)?;
    let mut h = relu_matrix(&proj_pre);
    let mut layers = Vec::with_capacity(params.layers.len());
    for (w, b) in &params.layers {
        let propagated = match adjacency {
            Some(a) => spmm(a, &h)?,
            None => h,
        };
        let mut pre = matmul(&propagated, w)?;
        pre.add_row_broadcast(b)?;
        h = relu_matrix(&pre);
        layers.push((propagated, pre));
    }
    Ok(EncoderTrace {
        proj_pre,
        layers,
        output: h,
    })
}

/// Backpropagates `d_output` (gradient w.r.t. the final embeddings).
pub fn encode_backward(
    feat: &FeatureMatrix,
    adjacency: Option<&CsrMatrix>,
    params: &EncoderParams<'_>,
    trace: &EncoderTrace,
    d_output: &DenseMatrix,
) -> Result<EncoderGrads> {
    let mut d_h = d_output.clone();
    let mut layer_grads = Vec::with_capacity(trace.layers.len());
    for ((propagated, pre), (w, _)) in trace.layers.iter().zip(&params.layers).rev() {
        let d_pre = relu_backward(pre, &d_h)?;
        let d_w = matmul_tn(propagated, &d_pre)?;
        let d_b = d_pre.column_sums();
        let d_prop = matmul_nt(&d_pre, w)?;
        d_h = match adjacency {
            Some(a) => spmm_tn(a, &d_prop)?,
            None => d_prop,
        };
        layer_grads.push((d_w, d_b));
    }
    layer_grads.reverse();
    let d_proj_pre = relu_backward(&trace.proj_pre, &d_h)?;
    Ok(EncoderGrads {
        proj_w: project_back(feat, &d_proj_pre)?,
        proj_b: d_proj_pre.column_sums(),
        layers: layer_grads,
    })
}
