//! Self-contained learning engine: one-vs-one kernel SVM trained by SMO, and
//! dense / conv1d / LSTM networks with manual backprop, Adam optimization and
//! categorical cross-entropy.

mod linalg;
mod nets;
pub mod serialize;
mod svm;
mod tensor;
mod train;

pub use nets::{NetKind, Network, ParamEntry, CNN_CHANNELS_1, CNN_CHANNELS_2, CNN_KERNEL, FCN_HIDDEN, LSTM_UNITS};
pub use svm::{smo_train, BinarySvm, Kernel, KernelSpec, SvmConfig, SvmModel};
pub use tensor::Tensor;
pub use train::{train_network, ArchConfig, FittedNetwork};

use crate::error::{Error, Result};

/// The four classifier families of the evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassifierKind {
    Svm,
    Fcn,
    Lstm,
    Cnn,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::Svm,
        ClassifierKind::Fcn,
        ClassifierKind::Lstm,
        ClassifierKind::Cnn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Fcn => "fcn",
            ClassifierKind::Lstm => "lstm",
            ClassifierKind::Cnn => "cnn",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "svm" => ClassifierKind::Svm,
            "fcn" => ClassifierKind::Fcn,
            "lstm" => ClassifierKind::Lstm,
            "cnn" => ClassifierKind::Cnn,
            other => return Err(Error::validation(format!("unknown classifier `{other}`"))),
        })
    }

    pub fn net_kind(&self) -> Option<NetKind> {
        match self {
            ClassifierKind::Svm => None,
            ClassifierKind::Fcn => Some(NetKind::Fcn),
            ClassifierKind::Lstm => Some(NetKind::Lstm),
            ClassifierKind::Cnn => Some(NetKind::Cnn),
        }
    }
}

/// What a trained model expects as input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputSpec {
    /// Flat feature rows (SVM).
    Features { dim: usize, classes: usize },
    /// Multichannel waveform batches (networks).
    Waveform { steps: usize, channels: usize, classes: usize },
}

impl InputSpec {
    pub fn classes(&self) -> usize {
        match *self {
            InputSpec::Features { classes, .. } | InputSpec::Waveform { classes, .. } => classes,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelParams {
    Svm(SvmModel),
    Net(Network),
}

/// A fitted classifier: immutable parameters plus the input contract.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub kind: ClassifierKind,
    pub input: InputSpec,
    pub params: ModelParams,
    /// Per-epoch mean training loss (empty for SVM).
    pub train_loss: Vec<f64>,
}

/// Inference batch cap keeping per-call cache memory bounded.
const PREDICT_CHUNK: usize = 64;

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Predict class labels for a batch of rows matching the model's input spec.
///
/// Networks take (N, steps, channels) tensors; the SVM takes (N, dim). Ties
/// resolve to the lowest class index.
pub fn predict(model: &TrainedModel, rows: &Tensor) -> Result<Vec<usize>> {
    match &model.params {
        ModelParams::Svm(svm) => {
            let shape = rows.shape();
            if shape.len() != 2 || shape[1] != svm.dim {
                return Err(Error::validation(format!(
                    "feature batch shape {shape:?} does not match dim {}",
                    svm.dim
                )));
            }
            Ok((0..rows.rows()).map(|i| svm.predict_row(rows.row(i))).collect())
        }
        ModelParams::Net(net) => {
            let shape = rows.shape();
            if shape.len() != 3 || shape[1] != net.steps || shape[2] != net.channels {
                return Err(Error::validation(format!(
                    "waveform batch shape {shape:?} does not match ({}, {})",
                    net.steps, net.channels
                )));
            }
            let n = rows.rows();
            let row_len = rows.row_len();
            let mut out = Vec::with_capacity(n);
            let mut start = 0;
            while start < n {
                let count = PREDICT_CHUNK.min(n - start);
                let chunk = Tensor::new(
                    vec![count, net.steps, net.channels],
                    rows.data()[start * row_len..(start + count) * row_len].to_vec(),
                )?;
                let probs = net.forward(&chunk)?;
                let k = net.classes;
                for i in 0..count {
                    out.push(argmax_lowest(&probs.data()[i * k..(i + 1) * k]));
                }
                start += count;
            }
            Ok(out)
        }
    }
}
