//! End-to-end lipreader: a tanh feed-forward layer, two stacked LSTM layers
//! and a softmax word classifier, trained by backpropagation through time.

mod gradcheck;
mod kernels;
mod layers;
mod network;
mod train;

pub use gradcheck::{gradient_check, gradient_check_with, GradCheckReport, GradCheckSpec};
pub use layers::{lstm_step, Dense, Gate, LstmLayer};
pub use network::{LossPlacement, LstmNetwork, NetworkShape};
pub use train::{
    evaluate_accuracy, train, train_with, EarlyStopping, EpochRecord, LabeledSequence, TrainConfig, TrainOutcome,
};

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the network is generic over (`f32` for training,
/// `f64` for gradient checking).
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Default + Sum + Send + Sync + 'static {
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
