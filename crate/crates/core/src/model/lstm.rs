use ndarray::{s, Array1, Array2};
use rand::Rng;

use super::encoder::outer;
use super::{sigmoid, slice_of, slice_of_mut, uniform_matrix, uniform_vector, ParamSet};

/// LSTM cell parameters. Gate rows are stacked as
/// `[input, forget, output, candidate]`, each `hidden` rows tall.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[4h, d]`
    pub input_weight: Array2<f64>,
    /// `[4h, h]`
    pub recurrent_weight: Array2<f64>,
    /// `[4h]`
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Array1<f64>,
    pub cell: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden: Array1::zeros(hidden),
            cell: Array1::zeros(hidden),
        }
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    input: Array1<f64>,
    prev: LstmState,
    gates: Array1<f64>,
    cell_tanh: Array1<f64>,
}

/// Forward pass record: hidden state per step plus what backward needs.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub hidden_states: Vec<Array1<f64>>,
    pub final_state: LstmState,
    steps: Vec<StepCache>,
}

impl LstmParams {
    pub fn new<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input_weight: uniform_matrix(4 * hidden, input_dim, rng),
            recurrent_weight: uniform_matrix(4 * hidden, hidden, rng),
            bias: uniform_vector(4 * hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.recurrent_weight.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.input_weight.ncols()
    }

    // Activated gates [i, f, o, g] for one step.
    fn gates(&self, x: &Array1<f64>, prev: &LstmState) -> Array1<f64> {
        let h = self.hidden();
        let mut z = self.input_weight.dot(x) + self.recurrent_weight.dot(&prev.hidden) + &self.bias;
        z.slice_mut(s![..3 * h]).mapv_inplace(sigmoid);
        z.slice_mut(s![3 * h..]).mapv_inplace(f64::tanh);
        z
    }

    fn apply(&self, gates: &Array1<f64>, prev: &LstmState) -> LstmState {
        let h = self.hidden();
        let (i, f, o, g) = (
            gates.slice(s![..h]),
            gates.slice(s![h..2 * h]),
            gates.slice(s![2 * h..3 * h]),
            gates.slice(s![3 * h..]),
        );
        let cell = &f * &prev.cell + &i * &g;
        let hidden = &o * &cell.mapv(f64::tanh);
        LstmState { hidden, cell }
    }

    /// One recurrence step.
    pub fn step(&self, x: &Array1<f64>, prev: &LstmState) -> LstmState {
        self.apply(&self.gates(x, prev), prev)
    }

    /// Runs the recurrence from a zero state over `xs`.
    pub fn forward(&self, xs: &[Array1<f64>]) -> LstmTrace {
        let mut state = LstmState::zeros(self.hidden());
        let mut steps = Vec::with_capacity(xs.len());
        let mut hidden_states = Vec::with_capacity(xs.len());
        for x in xs {
            let gates = self.gates(x, &state);
            let next = self.apply(&gates, &state);
            steps.push(StepCache {
                input: x.clone(),
                prev: state,
                gates,
                cell_tanh: next.cell.mapv(f64::tanh),
            });
            hidden_states.push(next.hidden.clone());
            state = next;
        }
        LstmTrace {
            hidden_states,
            final_state: state,
            steps,
        }
    }

    /// Backpropagation through time.
    ///
    /// `d_hidden[t]` is the loss gradient flowing into `h_t` from outside the
    /// recurrence. Parameter gradients are accumulated into `grads`; the
    /// returned vectors are the gradients w.r.t. each input `x_t`.
    pub fn backward(&self, trace: &LstmTrace, d_hidden: &[Array1<f64>], grads: &mut LstmParams) -> Vec<Array1<f64>> {
        let h = self.hidden();
        let steps = trace.steps.len();
        let mut dh_next = Array1::zeros(h);
        let mut dc_next = Array1::zeros(h);
        let mut dxs = vec![Array1::zeros(self.input_dim()); steps];
        for t in (0..steps).rev() {
            let st = &trace.steps[t];
            let g = &st.gates;
            let (i, f, o, cand) = (
                g.slice(s![..h]),
                g.slice(s![h..2 * h]),
                g.slice(s![2 * h..3 * h]),
                g.slice(s![3 * h..]),
            );
            let dh = &d_hidden[t] + &dh_next;
            let d_o = &dh * &st.cell_tanh;
            let dc = &dc_next + &(&dh * &o * &st.cell_tanh.mapv(|v| 1.0 - v * v));
            let d_i = &dc * &cand;
            let d_cand = &dc * &i;
            let d_f = &dc * &st.prev.cell;

            let mut dz = Array1::zeros(4 * h);
            dz.slice_mut(s![..h]).assign(&(&d_i * &i.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![h..2 * h]).assign(&(&d_f * &f.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![2 * h..3 * h])
                .assign(&(&d_o * &o.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![3 * h..])
                .assign(&(&d_cand * &cand.mapv(|v| 1.0 - v * v)));

            grads.input_weight.scaled_add(1.0, &outer(&dz, &st.input));
            grads.recurrent_weight.scaled_add(1.0, &outer(&dz, &st.prev.hidden));
            grads.bias += &dz;
            dxs[t] = self.input_weight.t().dot(&dz);
            dh_next = self.recurrent_weight.t().dot(&dz);
            dc_next = &dc * &f;
        }
        dxs
    }
}

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            slice_of(&self.input_weight),
            slice_of(&self.recurrent_weight),
            self.bias.as_slice().unwrap(),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            slice_of_mut(&mut self.input_weight),
            slice_of_mut(&mut self.recurrent_weight),
            self.bias.as_slice_mut().unwrap(),
        ]
    }
}
