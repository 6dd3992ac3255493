//! Dense float64 layers with exact gradients, Adam, and portable checkpoints.

mod adam;
mod checkpoint;
mod gru;
mod layers;
mod tensor;

pub use adam::{adam_step, adam_step_model, AdamConfig, AdamState};
pub use checkpoint::{fingerprint, layer_records, Checkpointable, CheckpointMetadata, LayerRecord, ModelCheckpoint, ModelKind};
pub use gru::{Gru, GruCache};
pub use layers::{
    dropout_mask, maxpool_backward, maxpool_forward, relu, relu_backward, sigmoid, softmax, BatchNorm1d,
    BatchNormCache, Conv1d, Dense,
};
pub use tensor::{matmul, matmul_nt, matmul_tn_acc, Tensor};

/// Named access to every tensor a model owns, in a fixed order.
///
/// The same trait serves gradients: a zeroed clone of the model holds them.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, &Tensor)>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    /// A same-shaped copy with every tensor zeroed.
    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }
}

/// Running statistics are state, not trainable parameters.
pub fn is_trainable(name: &str) -> bool {
    !(name.ends_with("running_mean") || name.ends_with("running_var"))
}

/// Whether training or inference semantics apply (batch statistics, dropout).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
