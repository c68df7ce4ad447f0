use super::kernels::{axpy, matvec_t_add, outer_add, softmax};
use super::layers::{Dense, LstmLayer};
use super::Scalar;
use crate::archive::{Tensor, TensorSet};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::svm::argmax;

/// Layer sizes: `inputs -> units (tanh) -> LSTM(units) -> LSTM(units) -> classes`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkShape {
    pub inputs: usize,
    pub units: usize,
    pub classes: usize,
}

impl NetworkShape {
    /// 40x40 patches, 128 units per hidden layer, 51 words.
    pub const LIPREADER: NetworkShape = NetworkShape {
        inputs: 1600,
        units: 128,
        classes: 51,
    };

    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.units == 0 || self.classes < 2 {
            return Err(Error::InvalidConfig(format!("invalid network shape {self:?}")));
        }
        Ok(())
    }
}

/// Where the word label supervises the per-frame outputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossPlacement {
    /// Mean cross-entropy over all frames; prediction averages the posteriors.
    #[default]
    AllFrames,
    /// Cross-entropy of the last frame only; prediction uses its posterior.
    FinalFrame,
}

impl LossPlacement {
    pub fn frame_weights<T: Scalar>(self, steps: usize) -> Vec<T> {
        match self {
            LossPlacement::AllFrames => vec![T::one() / T::of(steps as f64); steps],
            LossPlacement::FinalFrame => {
                let mut w = vec![T::zero(); steps];
                w[steps - 1] = T::one();
                w
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossPlacement::AllFrames => "all-frames",
            LossPlacement::FinalFrame => "final-frame",
        }
    }
}

impl std::str::FromStr for LossPlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-frames" => Ok(LossPlacement::AllFrames),
            "final-frame" => Ok(LossPlacement::FinalFrame),
            other => Err(Error::InvalidConfig(format!(
                "unknown loss placement '{other}' (expected all-frames or final-frame)"
            ))),
        }
    }
}

/// The stacked feed-forward + LSTM + softmax classifier.
///
/// The same type doubles as the gradient accumulator for its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmNetwork<T> {
    pub shape: NetworkShape,
    pub ff: Dense<T>,
    pub lstm1: LstmLayer<T>,
    pub lstm2: LstmLayer<T>,
    pub output: Dense<T>,
}

pub(crate) const BLOCK_NAMES: [&str; 10] = [
    "ff.weights",
    "ff.bias",
    "lstm1.input_weights",
    "lstm1.recurrent_weights",
    "lstm1.bias",
    "lstm2.input_weights",
    "lstm2.recurrent_weights",
    "lstm2.bias",
    "softmax.weights",
    "softmax.bias",
];

struct LayerTrace<T> {
    units: usize,
    gates: Vec<T>,
    c: Vec<T>,
    tanh_c: Vec<T>,
    h: Vec<T>,
}

impl<T: Scalar> LayerTrace<T> {
    fn new(steps: usize, units: usize) -> Self {
        Self {
            units,
            gates: vec![T::zero(); steps * 4 * units],
            c: vec![T::zero(); steps * units],
            tanh_c: vec![T::zero(); steps * units],
            h: vec![T::zero(); steps * units],
        }
    }

    fn step(&mut self, layer: &LstmLayer<T>, x: &[T], t: usize, zeros: &[T]) {
        let u = self.units;
        let (c_before, c_rest) = self.c.split_at_mut(t * u);
        let (h_before, h_rest) = self.h.split_at_mut(t * u);
        let (c_prev, h_prev) = if t == 0 {
            (zeros, zeros)
        } else {
            (&c_before[(t - 1) * u..], &h_before[(t - 1) * u..])
        };
        layer.step_into(
            x,
            h_prev,
            c_prev,
            &mut self.gates[t * 4 * u..(t + 1) * 4 * u],
            &mut c_rest[..u],
            &mut self.tanh_c[t * u..(t + 1) * u],
            &mut h_rest[..u],
        );
    }

    fn h(&self, t: usize) -> &[T] {
        &self.h[t * self.units..(t + 1) * self.units]
    }

    fn prev<'a>(&'a self, v: &'a [T], t: usize, zeros: &'a [T]) -> &'a [T] {
        if t == 0 {
            zeros
        } else {
            &v[(t - 1) * self.units..t * self.units]
        }
    }

    /// BPTT through the whole sequence. `dh_above` holds `dL/dh_t` from the
    /// layer above; returns `dL/dx_t` for every step.
    fn backward(&self, layer: &LstmLayer<T>, grads: &mut LstmLayer<T>, inputs: &[T], dh_above: &[T]) -> Vec<T> {
        let u = self.units;
        let n_in = layer.inputs;
        let steps = self.h.len() / u;
        let zeros = vec![T::zero(); u];
        let mut dx = vec![T::zero(); steps * n_in];
        let mut dc = vec![T::zero(); u];
        let mut dh_next = vec![T::zero(); u];
        let mut dh = vec![T::zero(); u];
        let mut da = vec![T::zero(); 4 * u];
        for t in (0..steps).rev() {
            for j in 0..u {
                dh[j] = dh_above[t * u + j] + dh_next[j];
            }
            dh_next.fill(T::zero());
            layer.backward_step(
                grads,
                &inputs[t * n_in..(t + 1) * n_in],
                self.prev(&self.h, t, &zeros),
                self.prev(&self.c, t, &zeros),
                &self.gates[t * 4 * u..(t + 1) * 4 * u],
                &self.tanh_c[t * u..(t + 1) * u],
                &dh,
                &mut dc,
                &mut dx[t * n_in..(t + 1) * n_in],
                &mut dh_next,
                &mut da,
            );
        }
        dx
    }
}

struct Trace<T> {
    steps: usize,
    ff: Vec<T>,
    l1: LayerTrace<T>,
    l2: LayerTrace<T>,
    logits: Vec<T>,
    probs: Vec<T>,
    log_norm: Vec<T>,
}

impl<T: Scalar> LstmNetwork<T> {
    pub fn zeros(shape: NetworkShape) -> Self {
        Self {
            shape,
            ff: Dense::zeros(shape.inputs, shape.units),
            lstm1: LstmLayer::zeros(shape.units, shape.units),
            lstm2: LstmLayer::zeros(shape.units, shape.units),
            output: Dense::zeros(shape.units, shape.classes),
        }
    }

    /// Every parameter drawn i.i.d. from `U[-range, range)`.
    ///
    /// Draw order: the blocks in [`LstmNetwork::blocks`] order, each
    /// row-major, from one `Rng::new(seed)` stream.
    pub fn init_uniform(shape: NetworkShape, range: f64, seed: u64) -> Self {
        let mut net = Self::zeros(shape);
        let mut rng = Rng::new(seed);
        for (_, block) in net.blocks_mut() {
            for v in block.iter_mut() {
                *v = T::of(rng.uniform(-range, range));
            }
        }
        net
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// Named parameter blocks in a fixed order.
    pub fn blocks(&self) -> [(&'static str, &[T]); 10] {
        [
            (BLOCK_NAMES[0], &self.ff.weights),
            (BLOCK_NAMES[1], &self.ff.bias),
            (BLOCK_NAMES[2], &self.lstm1.input_weights),
            (BLOCK_NAMES[3], &self.lstm1.recurrent_weights),
            (BLOCK_NAMES[4], &self.lstm1.bias),
            (BLOCK_NAMES[5], &self.lstm2.input_weights),
            (BLOCK_NAMES[6], &self.lstm2.recurrent_weights),
            (BLOCK_NAMES[7], &self.lstm2.bias),
            (BLOCK_NAMES[8], &self.output.weights),
            (BLOCK_NAMES[9], &self.output.bias),
        ]
    }

    pub fn blocks_mut(&mut self) -> [(&'static str, &mut [T]); 10] {
        let Self {
            ff,
            lstm1,
            lstm2,
            output,
            ..
        } = self;
        [
            (BLOCK_NAMES[0], &mut ff.weights),
            (BLOCK_NAMES[1], &mut ff.bias),
            (BLOCK_NAMES[2], &mut lstm1.input_weights),
            (BLOCK_NAMES[3], &mut lstm1.recurrent_weights),
            (BLOCK_NAMES[4], &mut lstm1.bias),
            (BLOCK_NAMES[5], &mut lstm2.input_weights),
            (BLOCK_NAMES[6], &mut lstm2.recurrent_weights),
            (BLOCK_NAMES[7], &mut lstm2.bias),
            (BLOCK_NAMES[8], &mut output.weights),
            (BLOCK_NAMES[9], &mut output.bias),
        ]
    }

    pub fn fill(&mut self, value: T) {
        for (_, b) in self.blocks_mut() {
            b.fill(value);
        }
    }

    pub fn squared_norm(&self) -> T {
        self.blocks()
            .iter()
            .flat_map(|(_, b)| b.iter())
            .fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub fn scale(&mut self, factor: T) {
        for (_, b) in self.blocks_mut() {
            for v in b.iter_mut() {
                *v = *v * factor;
            }
        }
    }

    /// `self += alpha * other`, block by block.
    pub fn add_scaled(&mut self, alpha: T, other: &LstmNetwork<T>) {
        for ((_, dst), (_, src)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            axpy(dst, alpha, src);
        }
    }

    /// Plain gradient-descent update `theta -= lr * grads`.
    pub fn sgd_step(&mut self, grads: &LstmNetwork<T>, learning_rate: T) {
        self.add_scaled(-learning_rate, grads);
    }

    fn check_frames<F: AsRef<[T]>>(&self, frames: &[F]) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("empty frame sequence".into()));
        }
        if let Some(bad) = frames.iter().position(|f| f.as_ref().len() != self.shape.inputs) {
            return Err(Error::InvalidInput(format!(
                "frame {bad} has {} values, network expects {}",
                frames[bad].as_ref().len(),
                self.shape.inputs
            )));
        }
        Ok(())
    }

    fn trace<F: AsRef<[T]>>(&self, frames: &[F]) -> Trace<T> {
        let NetworkShape { units, classes, .. } = self.shape;
        let steps = frames.len();
        let zeros = vec![T::zero(); units];
        let mut tr = Trace {
            steps,
            ff: vec![T::zero(); steps * units],
            l1: LayerTrace::new(steps, units),
            l2: LayerTrace::new(steps, units),
            logits: vec![T::zero(); steps * classes],
            probs: vec![T::zero(); steps * classes],
            log_norm: vec![T::zero(); steps],
        };
        for (t, frame) in frames.iter().enumerate() {
            let ff = &mut tr.ff[t * units..(t + 1) * units];
            self.ff.forward_into(frame.as_ref(), ff);
            for v in ff.iter_mut() {
                *v = v.tanh();
            }
            tr.l1.step(&self.lstm1, &tr.ff[t * units..(t + 1) * units], t, &zeros);
            let (l1, l2) = (&tr.l1, &mut tr.l2);
            l2.step(&self.lstm2, l1.h(t), t, &zeros);
            let logits = &mut tr.logits[t * classes..(t + 1) * classes];
            self.output.forward_into(tr.l2.h(t), logits);
            tr.log_norm[t] = softmax(logits, &mut tr.probs[t * classes..(t + 1) * classes]);
        }
        tr
    }

    /// Per-frame class posteriors (`frames.len()` rows of `classes` values).
    /// Recurrent state starts at zero for every call.
    pub fn forward<F: AsRef<[T]>>(&self, frames: &[F]) -> Result<Vec<Vec<T>>> {
        self.check_frames(frames)?;
        let tr = self.trace(frames);
        Ok(tr.probs.chunks_exact(self.shape.classes).map(<[T]>::to_vec).collect())
    }

    /// Word label and the posterior it was taken from.
    pub fn predict_word<F: AsRef<[T]>>(&self, frames: &[F], placement: LossPlacement) -> Result<(usize, Vec<T>)> {
        let posteriors = self.forward(frames)?;
        let aggregated = match placement {
            LossPlacement::FinalFrame => posteriors.last().cloned().expect("non-empty"),
            LossPlacement::AllFrames => {
                let mut acc = vec![T::zero(); self.shape.classes];
                for row in &posteriors {
                    for (a, &p) in acc.iter_mut().zip(row) {
                        *a = *a + p;
                    }
                }
                let n = T::of(posteriors.len() as f64);
                acc.iter_mut().for_each(|a| *a = *a / n);
                acc
            }
        };
        Ok((argmax(&aggregated), aggregated))
    }

    /// Loss under `placement` and its full BPTT gradient.
    pub fn loss_and_gradients<F: AsRef<[T]>>(
        &self,
        frames: &[F],
        label: usize,
        placement: LossPlacement,
    ) -> Result<(T, LstmNetwork<T>)> {
        let mut grads = LstmNetwork::zeros(self.shape);
        let weights = placement.frame_weights(frames.len().max(1));
        let loss = self.accumulate_gradients(frames, label, &weights, &mut grads)?;
        Ok((loss, grads))
    }

    /// Loss `sum_t w_t * CE_t`; its gradient is added into `grads`.
    pub fn accumulate_gradients<F: AsRef<[T]>>(
        &self,
        frames: &[F],
        label: usize,
        frame_weights: &[T],
        grads: &mut LstmNetwork<T>,
    ) -> Result<T> {
        self.check_frames(frames)?;
        let NetworkShape { inputs, units, classes } = self.shape;
        if label >= classes {
            return Err(Error::InvalidLabels(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        if frame_weights.len() != frames.len() {
            return Err(Error::InvalidInput("one loss weight per frame required".into()));
        }
        if grads.shape != self.shape {
            return Err(Error::InvalidInput("gradient buffer shape mismatch".into()));
        }
        let tr = self.trace(frames);
        let steps = tr.steps;

        let mut loss = T::zero();
        let mut dh2 = vec![T::zero(); steps * units];
        let mut dlogits = vec![T::zero(); classes];
        for t in 0..steps {
            let w = frame_weights[t];
            loss = loss + w * (tr.log_norm[t] - tr.logits[t * classes + label]);
            if w == T::zero() {
                continue;
            }
            for (k, d) in dlogits.iter_mut().enumerate() {
                let target = if k == label { T::one() } else { T::zero() };
                *d = w * (tr.probs[t * classes + k] - target);
            }
            let h2 = tr.l2.h(t);
            outer_add(&mut grads.output.weights, &dlogits, h2);
            axpy(&mut grads.output.bias, T::one(), &dlogits);
            matvec_t_add(&mut dh2[t * units..(t + 1) * units], &self.output.weights, &dlogits);
        }

        let dh1 = tr.l2.backward(&self.lstm2, &mut grads.lstm2, &tr.l1.h, &dh2);
        let dff = tr.l1.backward(&self.lstm1, &mut grads.lstm1, &tr.ff, &dh1);

        let mut dz = vec![T::zero(); units];
        for (t, frame) in frames.iter().enumerate() {
            for j in 0..units {
                let y = tr.ff[t * units + j];
                dz[j] = dff[t * units + j] * (T::one() - y * y);
            }
            debug_assert_eq!(frame.as_ref().len(), inputs);
            outer_add(&mut grads.ff.weights, &dz, frame.as_ref());
            axpy(&mut grads.ff.bias, T::one(), &dz);
        }
        Ok(loss)
    }

    /// Converts the parameters to another precision.
    pub fn cast<U: Scalar>(&self) -> LstmNetwork<U> {
        let mut out = LstmNetwork::<U>::zeros(self.shape);
        for ((_, dst), (_, src)) in out.blocks_mut().into_iter().zip(self.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::of(s.to_f64().expect("finite"));
            }
        }
        out
    }

    /// Parameters as named `f32` sections plus the shape in the metadata.
    pub fn write_sections(&self, set: &mut TensorSet) {
        let dims = self.block_dims();
        for ((name, block), dims) in self.blocks().into_iter().zip(dims) {
            let data = block.iter().map(|v| v.to_f32().expect("finite")).collect();
            set.insert(name, Tensor::new(dims, data).expect("consistent shape"));
        }
        set.set_meta("net.inputs", self.shape.inputs);
        set.set_meta("net.units", self.shape.units);
        set.set_meta("net.classes", self.shape.classes);
    }

    pub fn read_sections(set: &TensorSet) -> Result<Self> {
        let shape = NetworkShape {
            inputs: set.meta_parse("net.inputs")?,
            units: set.meta_parse("net.units")?,
            classes: set.meta_parse("net.classes")?,
        };
        shape.validate().map_err(|e| Error::Format(e.to_string()))?;
        let mut net = Self::zeros(shape);
        let dims = net.block_dims();
        for ((name, block), dims) in net.blocks_mut().into_iter().zip(dims) {
            let t = set.require(name)?;
            if t.dims() != dims.as_slice() {
                return Err(Error::Format(format!(
                    "section '{name}' has dims {:?}, expected {dims:?}",
                    t.dims()
                )));
            }
            for (d, &s) in block.iter_mut().zip(t.data()) {
                *d = T::of(f64::from(s));
            }
        }
        Ok(net)
    }

    fn block_dims(&self) -> [Vec<usize>; 10] {
        let NetworkShape { inputs, units, classes } = self.shape;
        [
            vec![units, inputs],
            vec![units],
            vec![4 * units, units],
            vec![4 * units, units],
            vec![4 * units],
            vec![4 * units, units],
            vec![4 * units, units],
            vec![4 * units],
            vec![classes, units],
            vec![classes],
        ]
    }
}
