//! Dense arrays, differentiable primitives, a gradient tape and the
//! Nesterov-momentum optimizer used by every trainable model in the crate.

mod array;
pub mod ops;
mod optim;
mod tape;

pub use array::DenseArray;
pub(crate) use array::dot;
pub use ops::{
    affine, conv1d, cosine, embedding_lookup, maxpool1d, relu, Padding, COSINE_EPS,
};
pub use optim::{nesterov_step, OptimizerState, SgdConfig};
pub use tape::{sigmoid, GradTape, Gradients, NodeId};

/// Anything holding an ordered list of named learnable arrays.
pub trait Parameterized {
    fn named_arrays(&self) -> Vec<(String, &DenseArray)>;
    fn arrays_mut(&mut self) -> Vec<&mut DenseArray>;

    fn arrays(&self) -> Vec<&DenseArray> {
        self.named_arrays().into_iter().map(|(_, a)| a).collect()
    }

    fn num_parameters(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }
}
