//! Single-layer LSTM without peepholes.
//!
//! Gate pre-activations are stacked in the order input, forget, output,
//! cell-candidate, so all weight matrices have `4 * hidden` rows:
//!
//! ```text
//! z_t = W_x x_t + W_h h_{t-1} + b
//! i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```

use rand::Rng;

use super::params::{uniform, Gradients, ParamId, ParameterStore};
use super::tensor::{sigmoid, Tensor};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Registers `{prefix}.w_x`, `{prefix}.w_h` and `{prefix}.b`. Weights are
    /// uniform in `[-scale, scale]`, biases zero except the forget gate at 1.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        scale: Real,
        rng: &mut R,
    ) -> Result<Self> {
        let w_x = store.register(
            &format!("{prefix}.w_x"),
            uniform(4 * hidden, input_dim, scale, rng),
        )?;
        let w_h = store.register(
            &format!("{prefix}.w_h"),
            uniform(4 * hidden, hidden, scale, rng),
        )?;
        let mut bias = Tensor::zeros(1, 4 * hidden);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        let b = store.register(&format!("{prefix}.b"), bias)?;
        Ok(LstmParams {
            w_x,
            w_h,
            b,
            input_dim,
            hidden,
        })
    }

    fn check(&self, store: &ParameterStore) -> Result<()> {
        let h4 = 4 * self.hidden;
        let expect = [
            (self.w_x, (h4, self.input_dim)),
            (self.w_h, (h4, self.hidden)),
            (self.b, (1, h4)),
        ];
        for (id, shape) in expect {
            let got = store.value(id).shape();
            if got != shape {
                return Err(Error::Shape(format!(
                    "{}: expected {shape:?}, got {got:?}",
                    store.get(id).name
                )));
            }
        }
        Ok(())
    }
}

/// Activations kept from the forward pass.
#[derive(Clone, Debug)]
pub struct LstmCache {
    inputs: Tensor,
    /// Activated gates per step, `[i | f | o | g]`.
    gates: Tensor,
    /// Row `t` holds the cell state after step `t`; row 0 is the zero state.
    cells: Tensor,
    hiddens: Tensor,
}

impl LstmCache {
    pub fn steps(&self) -> usize {
        self.inputs.rows()
    }

    pub fn hidden_states(&self) -> &Tensor {
        &self.hiddens
    }
}

/// Runs the recurrence over `inputs` (one row per step) from zero state and
/// returns the last hidden state.
pub fn lstm_forward(
    inputs: &Tensor,
    params: &LstmParams,
    store: &ParameterStore,
) -> Result<(Vec<Real>, LstmCache)> {
    if inputs.rows() == 0 {
        return Err(Error::Empty("LSTM input sequence"));
    }
    params.check(store)?;
    if inputs.cols() != params.input_dim {
        return Err(Error::Shape(format!(
            "LSTM input width {} != {}",
            inputs.cols(),
            params.input_dim
        )));
    }
    let hd = params.hidden;
    let steps = inputs.rows();
    let w_x = store.value(params.w_x);
    let w_h = store.value(params.w_h);
    let b = store.value(params.b);

    let mut gates = Tensor::zeros(steps, 4 * hd);
    let mut cells = Tensor::zeros(steps + 1, hd);
    let mut hiddens = Tensor::zeros(steps + 1, hd);
    let mut z = vec![0.0; 4 * hd];
    for t in 0..steps {
        z.copy_from_slice(b.data());
        w_x.matvec_acc(inputs.row(t), &mut z);
        w_h.matvec_acc(hiddens.row(t), &mut z);
        let g_row = gates.row_mut(t);
        for k in 0..3 * hd {
            g_row[k] = sigmoid(z[k]);
        }
        for k in 3 * hd..4 * hd {
            g_row[k] = z[k].tanh();
        }
        let g_row = gates.row(t);
        for j in 0..hd {
            let (i, f, o, g) = (g_row[j], g_row[hd + j], g_row[2 * hd + j], g_row[3 * hd + j]);
            let c = f * cells.row(t)[j] + i * g;
            cells.row_mut(t + 1)[j] = c;
            hiddens.row_mut(t + 1)[j] = o * c.tanh();
        }
    }
    let last = hiddens.row(steps).to_vec();
    Ok((
        last,
        LstmCache {
            inputs: inputs.clone(),
            gates,
            cells,
            hiddens,
        },
    ))
}

/// Backpropagates `dh_last` through the cached sequence, accumulating weight
/// gradients into `grads`. Returns the gradient with respect to the inputs.
pub fn lstm_backward(
    cache: &LstmCache,
    dh_last: &[Real],
    params: &LstmParams,
    store: &ParameterStore,
    grads: &mut Gradients,
) -> Tensor {
    let hd = params.hidden;
    let steps = cache.steps();
    let w_x = store.value(params.w_x);
    let w_h = store.value(params.w_h);

    let mut dinputs = Tensor::zeros(steps, params.input_dim);
    let mut dh = dh_last.to_vec();
    let mut dc = vec![0.0; hd];
    let mut dz = vec![0.0; 4 * hd];
    for t in (0..steps).rev() {
        let g_row = cache.gates.row(t);
        let c_prev = cache.cells.row(t);
        let c = cache.cells.row(t + 1);
        for j in 0..hd {
            let (i, f, o, g) = (g_row[j], g_row[hd + j], g_row[2 * hd + j], g_row[3 * hd + j]);
            let tc = c[j].tanh();
            let d_o = dh[j] * tc;
            dc[j] += dh[j] * o * (1.0 - tc * tc);
            let d_i = dc[j] * g;
            let d_f = dc[j] * c_prev[j];
            let d_g = dc[j] * i;
            dz[j] = d_i * i * (1.0 - i);
            dz[hd + j] = d_f * f * (1.0 - f);
            dz[2 * hd + j] = d_o * o * (1.0 - o);
            dz[3 * hd + j] = d_g * (1.0 - g * g);
            dc[j] *= f;
        }
        grads.get_mut(params.w_x).outer_acc(&dz, cache.inputs.row(t));
        grads.get_mut(params.w_h).outer_acc(&dz, cache.hiddens.row(t));
        for (gb, d) in grads.get_mut(params.b).data_mut().iter_mut().zip(&dz) {
            *gb += d;
        }
        w_x.matvec_t_acc(&dz, dinputs.row_mut(t));
        dh.fill(0.0);
        w_h.matvec_t_acc(&dz, &mut dh);
    }
    dinputs
}
