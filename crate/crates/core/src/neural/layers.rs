use rand::Rng;

use super::tensor::{dot, Tensor};
use crate::{Error, Real, Result};

/// Probabilities are floored at this value before taking logs.
pub const PROB_FLOOR: Real = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Gathers rows of `table`, one per index.
pub fn embed(indices: &[usize], table: &Tensor) -> Result<Tensor> {
    let dim = table.cols();
    let mut out = Tensor::zeros(indices.len(), dim);
    for (i, &ix) in indices.iter().enumerate() {
        if ix >= table.rows() {
            return Err(Error::OutOfRange {
                what: "embedding table",
                index: ix,
                size: table.rows(),
            });
        }
        out.row_mut(i).copy_from_slice(table.row(ix));
    }
    Ok(out)
}

/// Scatters `upstream` rows back into the table gradient. Repeated indices sum.
pub fn embed_backward(indices: &[usize], upstream: &Tensor, grad_table: &mut Tensor) {
    for (i, &ix) in indices.iter().enumerate() {
        let src = upstream.row(i);
        for (g, u) in grad_table.row_mut(ix).iter_mut().zip(src) {
            *g += u;
        }
    }
}

/// Affine map `w h + b` where `w` is `out x in` and `b` a single row.
pub fn dense(h: &[Real], w: &Tensor, b: &Tensor) -> Vec<Real> {
    let mut logits = b.data().to_vec();
    w.matvec_acc(h, &mut logits);
    logits
}

/// Backward of [`dense`]: accumulates weight/bias gradients and returns `dL/dh`.
pub fn dense_backward(
    h: &[Real],
    w: &Tensor,
    dlogits: &[Real],
    grad_w: &mut Tensor,
    grad_b: &mut Tensor,
) -> Vec<Real> {
    grad_w.outer_acc(dlogits, h);
    for (g, d) in grad_b.data_mut().iter_mut().zip(dlogits) {
        *g += d;
    }
    let mut dh = vec![0.0; h.len()];
    w.matvec_t_acc(dlogits, &mut dh);
    dh
}

/// Max-shifted softmax.
pub fn softmax(logits: &[Real]) -> Vec<Real> {
    let max = logits.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let mut out: Vec<Real> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: Real = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

pub fn dense_softmax(h: &[Real], w: &Tensor, b: &Tensor) -> Vec<Real> {
    softmax(&dense(h, w, b))
}

/// Negative log-likelihood of `gold`, with the probability floored at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[Real], gold: usize) -> Result<Real> {
    let p = probs.get(gold).ok_or(Error::OutOfRange {
        what: "class distribution",
        index: gold,
        size: probs.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Gradient of `cross_entropy(softmax(z), gold)` with respect to `z`, scaled.
pub fn softmax_xent_grad(probs: &[Real], gold: usize, scale: Real) -> Vec<Real> {
    let mut d: Vec<Real> = probs.iter().map(|p| p * scale).collect();
    d[gold] -= scale;
    d
}

/// Per-component multipliers of an inverted-dropout draw: `0` or `1/(1-rate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask(Option<Vec<Real>>);

impl DropoutMask {
    pub fn identity() -> Self {
        DropoutMask(None)
    }

    pub fn draw<R: Rng + ?Sized>(len: usize, rate: Real, rng: &mut R) -> Self {
        if rate == 0.0 {
            return DropoutMask(None);
        }
        let keep = 1.0 / (1.0 - rate);
        DropoutMask(Some(
            (0..len)
                .map(|_| if rng.gen::<Real>() < rate { 0.0 } else { keep })
                .collect(),
        ))
    }

    pub fn apply(&self, x: &mut [Real]) {
        if let Some(m) = &self.0 {
            x.iter_mut().zip(m).for_each(|(v, s)| *v *= s);
        }
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_none()
    }
}

pub fn check_dropout_rate(rate: Real) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout. Returns the output and the mask needed for backward.
pub fn dropout<R: Rng + ?Sized>(
    x: &[Real],
    rate: Real,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<Real>, DropoutMask)> {
    check_dropout_rate(rate)?;
    let mask = match mode {
        Mode::Infer => DropoutMask::identity(),
        Mode::Train => DropoutMask::draw(x.len(), rate, rng),
    };
    let mut out = x.to_vec();
    mask.apply(&mut out);
    Ok((out, mask))
}

/// Cosine similarity of two vectors; 0 if either is zero.
pub fn cosine(a: &[Real], b: &[Real]) -> Real {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}
