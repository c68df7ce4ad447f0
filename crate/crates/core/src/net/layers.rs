use super::kernels::{axpy, matvec_add, matvec_t_add, outer_add, sigmoid};
use super::Scalar;
use crate::error::{Error, Result};

/// Fully connected layer `y = W x + b`; `W` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub(crate) fn forward_into(&self, x: &[T], out: &mut [T]) {
        out.copy_from_slice(&self.bias);
        matvec_add(out, &self.weights, x);
    }
}

/// LSTM gates, in the order their blocks are stacked in [`LstmLayer`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];
}

/// LSTM layer without peepholes.
///
/// The four gates' parameters are stacked in [`Gate`] order: `input_weights`
/// is `4 units x inputs`, `recurrent_weights` is `4 units x units` and `bias`
/// has `4 units` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer<T> {
    pub inputs: usize,
    pub units: usize,
    pub input_weights: Vec<T>,
    pub recurrent_weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LstmLayer<T> {
    pub fn zeros(inputs: usize, units: usize) -> Self {
        Self {
            inputs,
            units,
            input_weights: vec![T::zero(); 4 * units * inputs],
            recurrent_weights: vec![T::zero(); 4 * units * units],
            bias: vec![T::zero(); 4 * units],
        }
    }

    /// `units x inputs` input weights of one gate.
    pub fn gate_input_weights(&self, gate: Gate) -> &[T] {
        let n = self.units * self.inputs;
        &self.input_weights[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_input_weights_mut(&mut self, gate: Gate) -> &mut [T] {
        let n = self.units * self.inputs;
        &mut self.input_weights[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_recurrent_weights(&self, gate: Gate) -> &[T] {
        let n = self.units * self.units;
        &self.recurrent_weights[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_recurrent_weights_mut(&mut self, gate: Gate) -> &mut [T] {
        let n = self.units * self.units;
        &mut self.recurrent_weights[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_bias(&self, gate: Gate) -> &[T] {
        &self.bias[gate as usize * self.units..(gate as usize + 1) * self.units]
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [T] {
        let u = self.units;
        &mut self.bias[gate as usize * u..(gate as usize + 1) * u]
    }

    /// One time step. `gates` receives the activated gate values
    /// (`i, f, o, g` blocks), `c` and `h` the new state.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn step_into(
        &self,
        x: &[T],
        h_prev: &[T],
        c_prev: &[T],
        gates: &mut [T],
        c: &mut [T],
        tanh_c: &mut [T],
        h: &mut [T],
    ) {
        let u = self.units;
        gates.copy_from_slice(&self.bias);
        matvec_add(gates, &self.input_weights, x);
        matvec_add(gates, &self.recurrent_weights, h_prev);
        let (sig, cand) = gates.split_at_mut(3 * u);
        for v in sig.iter_mut() {
            *v = sigmoid(*v);
        }
        for v in cand.iter_mut() {
            *v = v.tanh();
        }
        for j in 0..u {
            let (i, f, o, g) = (gates[j], gates[u + j], gates[2 * u + j], gates[3 * u + j]);
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
    }

    /// Backpropagates one time step.
    ///
    /// `dh` is the total gradient reaching `h_t`; `dc` carries the cell
    /// gradient from step `t+1` in and the gradient for `c_{t-1}` out.
    /// Parameter gradients accumulate into `grads`; `dx` and `dh_prev` are
    /// accumulated into as well.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_step(
        &self,
        grads: &mut LstmLayer<T>,
        x: &[T],
        h_prev: &[T],
        c_prev: &[T],
        gates: &[T],
        tanh_c: &[T],
        dh: &[T],
        dc: &mut [T],
        dx: &mut [T],
        dh_prev: &mut [T],
        da: &mut [T],
    ) {
        let u = self.units;
        let one = T::one();
        for j in 0..u {
            let (i, f, o, g) = (gates[j], gates[u + j], gates[2 * u + j], gates[3 * u + j]);
            let tc = tanh_c[j];
            let d_out = dh[j] * tc;
            let d_cell = dh[j] * o * (one - tc * tc) + dc[j];
            da[j] = d_cell * g * i * (one - i);
            da[u + j] = d_cell * c_prev[j] * f * (one - f);
            da[2 * u + j] = d_out * o * (one - o);
            da[3 * u + j] = d_cell * i * (one - g * g);
            dc[j] = d_cell * f;
        }
        outer_add(&mut grads.input_weights, da, x);
        outer_add(&mut grads.recurrent_weights, da, h_prev);
        axpy(&mut grads.bias, one, da);
        matvec_t_add(dx, &self.input_weights, da);
        matvec_t_add(dh_prev, &self.recurrent_weights, da);
    }
}

/// Single LSTM step: returns `(h_t, c_t)`.
///
/// ```text
/// i = sigma(Wi x + Ui h + bi)    f = sigma(Wf x + Uf h + bf)
/// o = sigma(Wo x + Uo h + bo)    g = tanh(Wc x + Uc h + bc)
/// c_t = f * c_prev + i * g       h_t = o * tanh(c_t)
/// ```
pub fn lstm_step<T: Scalar>(layer: &LstmLayer<T>, x: &[T], h_prev: &[T], c_prev: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let u = layer.units;
    if x.len() != layer.inputs || h_prev.len() != u || c_prev.len() != u {
        return Err(Error::InvalidInput(format!(
            "lstm_step expects x[{}], h[{u}], c[{u}]; got x[{}], h[{}], c[{}]",
            layer.inputs,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut gates = vec![T::zero(); 4 * u];
    let mut c = vec![T::zero(); u];
    let mut tanh_c = vec![T::zero(); u];
    let mut h = vec![T::zero(); u];
    layer.step_into(x, h_prev, c_prev, &mut gates, &mut c, &mut tanh_c, &mut h);
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn zero_layer_zero_state() {
        let layer = LstmLayer::<f64>::zeros(3, 4);
        let (h, c) = lstm_step(&layer, &[0.3, -1.0, 2.0], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_layer_halves_cell() {
        let layer = LstmLayer::<f64>::zeros(2, 3);
        let c_prev = [1.0, -2.0, 0.25];
        let (h, c) = lstm_step(&layer, &[0.0; 2], &[0.0; 3], &c_prev).unwrap();
        for j in 0..3 {
            assert!((c[j] - 0.5 * c_prev[j]).abs() < 1e-15);
            assert!((h[j] - 0.5 * (0.5 * c_prev[j]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch() {
        let layer = LstmLayer::<f32>::zeros(2, 3);
        assert!(lstm_step(&layer, &[0.0; 3], &[0.0; 3], &[0.0; 3]).is_err());
        assert!(lstm_step(&layer, &[0.0; 2], &[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn gate_views_partition_parameters() {
        let mut layer = LstmLayer::<f64>::zeros(2, 3);
        layer.gate_bias_mut(Gate::Forget).fill(1.0);
        layer.gate_input_weights_mut(Gate::Output).fill(2.0);
        assert_eq!(&layer.bias[3..6], &[1.0; 3]);
        assert_eq!(&layer.input_weights[12..18], &[2.0; 6]);
        assert!(layer.gate_recurrent_weights(Gate::Candidate).iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn cell_state_bound(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let mut layer = LstmLayer::<f64>::zeros(4, 5);
            for v in layer.input_weights.iter_mut().chain(&mut layer.recurrent_weights).chain(&mut layer.bias) {
                *v = rng.uniform(-3.0, 3.0);
            }
            let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let h: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let c_prev: Vec<f64> = (0..5).map(|_| rng.normal() * 5.0).collect();
            let mut gates = vec![0.0; 20];
            let (mut c, mut tc, mut hn) = (vec![0.0; 5], vec![0.0; 5], vec![0.0; 5]);
            layer.step_into(&x, &h, &c_prev, &mut gates, &mut c, &mut tc, &mut hn);
            for j in 0..5 {
                let f = gates[5 + j];
                prop_assert!(f < 1.0);
                prop_assert!(c[j].abs() <= f * c_prev[j].abs() + 1.0 + 1e-12);
                prop_assert!(hn[j].abs() <= 1.0);
            }
        }
    }
}
