//! GRU decoder over a projected figure context. Gate order in the stacked
//! matrices is reset, update, candidate.

use crate::scalar::{sigmoid, softmax_in_place, Scalar};
use crate::tensor::{matvec_acc, matvec_t_acc, outer_acc, ParamSet};

pub(crate) const EMB: usize = 0;
pub(crate) const W_ENC: usize = 1;
pub(crate) const B_ENC: usize = 2;
pub(crate) const W_X: usize = 3;
pub(crate) const B_X: usize = 4;
pub(crate) const W_H: usize = 5;
pub(crate) const B_H: usize = 6;
pub(crate) const W_C: usize = 7;
pub(crate) const W_OUT: usize = 8;
pub(crate) const B_OUT: usize = 9;

/// Teacher-forced decoder inputs and their next-token targets (`None` = not scored).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence {
    pub inputs: Vec<usize>,
    pub targets: Vec<Option<usize>>,
}

impl Sequence {
    pub fn num_targets(&self) -> usize {
        self.targets.iter().filter(|t| t.is_some()).count()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub features: usize,
}

/// Per-sequence figure context: `h0` and the constant gate contribution.
pub(crate) struct Context<T> {
    pub h0: Vec<T>,
    pub gate_term: Vec<T>,
}

pub(crate) struct Cell<T> {
    pub r: Vec<T>,
    pub z: Vec<T>,
    pub n: Vec<T>,
    /// Hidden-side candidate pre-activation, before the reset gate.
    pub hn: Vec<T>,
    pub h: Vec<T>,
}

pub(crate) fn context<T: Scalar>(d: Dims, p: &ParamSet<T>, feats: &[T]) -> Context<T> {
    let mut h0 = p.tensors[B_ENC].data.clone();
    matvec_acc(&p.tensors[W_ENC].data, d.hidden, d.features, feats, &mut h0);
    for v in &mut h0 {
        *v = v.tanh();
    }
    let mut gate_term = vec![T::zero(); 3 * d.hidden];
    matvec_acc(&p.tensors[W_C].data, 3 * d.hidden, d.hidden, &h0, &mut gate_term);
    Context { h0, gate_term }
}

pub(crate) fn cell<T: Scalar>(d: Dims, p: &ParamSet<T>, ctx: &Context<T>, x: usize, h_prev: &[T]) -> Cell<T> {
    let hd = d.hidden;
    let emb = &p.tensors[EMB].data[x * d.embed..(x + 1) * d.embed];
    let mut ax: Vec<T> = p.tensors[B_X]
        .data
        .iter()
        .zip(&ctx.gate_term)
        .map(|(a, b)| *a + *b)
        .collect();
    matvec_acc(&p.tensors[W_X].data, 3 * hd, d.embed, emb, &mut ax);
    let mut ah = p.tensors[B_H].data.clone();
    matvec_acc(&p.tensors[W_H].data, 3 * hd, hd, h_prev, &mut ah);

    let mut r = vec![T::zero(); hd];
    let mut z = vec![T::zero(); hd];
    let mut n = vec![T::zero(); hd];
    let mut h = vec![T::zero(); hd];
    for i in 0..hd {
        r[i] = sigmoid(ax[i] + ah[i]);
        z[i] = sigmoid(ax[hd + i] + ah[hd + i]);
        n[i] = (ax[2 * hd + i] + r[i] * ah[2 * hd + i]).tanh();
        h[i] = (T::one() - z[i]) * n[i] + z[i] * h_prev[i];
    }
    Cell {
        r,
        z,
        n,
        hn: ah[2 * hd..].to_vec(),
        h,
    }
}

pub(crate) fn logits<T: Scalar>(d: Dims, p: &ParamSet<T>, h: &[T]) -> Vec<T> {
    let mut out = p.tensors[B_OUT].data.clone();
    matvec_acc(&p.tensors[W_OUT].data, d.vocab, d.hidden, h, &mut out);
    out
}

/// Summed cross-entropy over scored positions. When `grads` is given, adds
/// `weight ·` the gradient of that sum.
pub(crate) fn run<T: Scalar>(
    d: Dims,
    p: &ParamSet<T>,
    feats: &[T],
    seq: &Sequence,
    grads: Option<(&mut ParamSet<T>, T)>,
) -> T {
    let hd = d.hidden;
    let ctx = context(d, p, feats);
    let mut h_prev = ctx.h0.clone();
    let mut cells: Vec<(Vec<T>, Cell<T>)> = Vec::with_capacity(seq.inputs.len());
    let mut probs: Vec<Option<Vec<T>>> = Vec::with_capacity(seq.inputs.len());
    let mut loss = T::zero();
    let keep = grads.is_some();
    for (&x, &target) in seq.inputs.iter().zip(&seq.targets) {
        let c = cell(d, p, &ctx, x, &h_prev);
        let next = c.h.clone();
        match target {
            Some(y) => {
                let mut l = logits(d, p, &c.h);
                let target_logit = l[y];
                let log_z = softmax_in_place(&mut l);
                loss += log_z - target_logit;
                probs.push(keep.then_some(l));
            }
            None => probs.push(None),
        }
        if keep {
            cells.push((std::mem::replace(&mut h_prev, next), c));
        } else {
            h_prev = next;
        }
    }
    let Some((g, weight)) = grads else {
        return loss;
    };

    let mut dh_next = vec![T::zero(); hd];
    let mut d_gate_term = vec![T::zero(); 3 * hd];
    let mut dax = vec![T::zero(); 3 * hd];
    let mut dah = vec![T::zero(); 3 * hd];
    for t in (0..seq.inputs.len()).rev() {
        let (h_prev, c) = &cells[t];
        let mut dh = std::mem::replace(&mut dh_next, vec![T::zero(); hd]);
        if let (Some(y), Some(pr)) = (seq.targets[t], &probs[t]) {
            let mut dl: Vec<T> = pr.iter().map(|v| *v * weight).collect();
            dl[y] -= weight;
            outer_acc(&mut g.tensors[W_OUT].data, d.vocab, hd, &dl, &c.h);
            for (gb, v) in g.tensors[B_OUT].data.iter_mut().zip(&dl) {
                *gb += *v;
            }
            matvec_t_acc(&p.tensors[W_OUT].data, d.vocab, hd, &dl, &mut dh);
        }
        for i in 0..hd {
            let dn = dh[i] * (T::one() - c.z[i]);
            let dz = dh[i] * (h_prev[i] - c.n[i]);
            dh_next[i] = dh[i] * c.z[i];
            let dan = dn * (T::one() - c.n[i] * c.n[i]);
            let dr = dan * c.hn[i];
            let dar = dr * c.r[i] * (T::one() - c.r[i]);
            let daz = dz * c.z[i] * (T::one() - c.z[i]);
            dax[i] = dar;
            dax[hd + i] = daz;
            dax[2 * hd + i] = dan;
            dah[i] = dar;
            dah[hd + i] = daz;
            dah[2 * hd + i] = dan * c.r[i];
        }
        let x = seq.inputs[t];
        let emb = &p.tensors[EMB].data[x * d.embed..(x + 1) * d.embed];
        outer_acc(&mut g.tensors[W_X].data, 3 * hd, d.embed, &dax, emb);
        matvec_t_acc(
            &p.tensors[W_X].data,
            3 * hd,
            d.embed,
            &dax,
            &mut g.tensors[EMB].data[x * d.embed..(x + 1) * d.embed],
        );
        outer_acc(&mut g.tensors[W_H].data, 3 * hd, hd, &dah, h_prev);
        matvec_t_acc(&p.tensors[W_H].data, 3 * hd, hd, &dah, &mut dh_next);
        for i in 0..3 * hd {
            g.tensors[B_X].data[i] += dax[i];
            g.tensors[B_H].data[i] += dah[i];
            d_gate_term[i] += dax[i];
        }
    }

    let mut dctx = dh_next;
    outer_acc(&mut g.tensors[W_C].data, 3 * hd, hd, &d_gate_term, &ctx.h0);
    matvec_t_acc(&p.tensors[W_C].data, 3 * hd, hd, &d_gate_term, &mut dctx);
    for (v, c) in dctx.iter_mut().zip(&ctx.h0) {
        *v *= T::one() - *c * *c;
    }
    outer_acc(&mut g.tensors[W_ENC].data, hd, d.features, &dctx, feats);
    for (gb, v) in g.tensors[B_ENC].data.iter_mut().zip(&dctx) {
        *gb += *v;
    }
    loss
}
