//! Momentum SGD: `v ← m·v − lr·g; θ ← θ + v`.

use super::backprop::Gradients;
use crate::error::{Error, Result};
use crate::math::DenseMatrix;
use crate::models::{RnnParameters, StepContext};

/// One velocity entry per parameter, same shapes as [`RnnParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub word_emb: DenseMatrix,
    pub label_emb: Option<DenseMatrix>,
    pub h: DenseMatrix,
    pub hidden_bias: Vec<f64>,
    pub r: Option<DenseMatrix>,
    pub o: DenseMatrix,
    pub output_bias: Vec<f64>,
}

impl Velocity {
    pub fn zeros_like(params: &RnnParameters) -> Self {
        let zeros = |m: &DenseMatrix| DenseMatrix::zeros(m.rows(), m.cols());
        Self {
            word_emb: zeros(params.word_emb.matrix()),
            label_emb: params.label_emb.as_ref().map(|t| zeros(t.matrix())),
            h: zeros(&params.h),
            hidden_bias: vec![0.0; params.hidden_bias.len()],
            r: params.r.as_ref().map(zeros),
            o: zeros(&params.o),
            output_bias: vec![0.0; params.output_bias.len()],
        }
    }
}

fn step_block(p: &mut [f64], v: &mut [f64], g: &[f64], lr: f64, momentum: f64) {
    for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
        *v = momentum * *v - lr * g;
        *p += *v;
    }
}

fn check(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::dim(what, expected, found));
    }
    Ok(())
}

fn check_grads(params: &RnnParameters, grads: &Gradients) -> Result<()> {
    check("H gradient", params.h.len(), grads.h.len())?;
    check("O gradient", params.o.len(), grads.o.len())?;
    check(
        "hidden bias gradient",
        params.hidden_bias.len(),
        grads.hidden_bias.len(),
    )?;
    check(
        "output bias gradient",
        params.output_bias.len(),
        grads.output_bias.len(),
    )?;
    match (&params.r, &grads.r) {
        (Some(r), Some(g)) => check("R gradient", r.len(), g.len())?,
        (None, None) => {}
        _ => {
            return Err(Error::Architecture(
                "recurrent gradient does not match the model".into(),
            ))
        }
    }
    let d = params.dims.emb_dim;
    for (id, g) in &grads.word_rows {
        check("word embedding gradient", d, g.len())?;
        params.word_emb.try_row(*id)?;
    }
    match &params.label_emb {
        Some(t) => {
            for (id, g) in &grads.label_rows {
                check("label embedding gradient", d, g.len())?;
                t.try_row(*id)?;
            }
        }
        None if !grads.label_rows.is_empty() => {
            return Err(Error::Architecture(format!("{} has no label embeddings", params.arch)))
        }
        None => {}
    }
    Ok(())
}

fn check_velocity(params: &RnnParameters, v: &Velocity) -> Result<()> {
    check("H velocity", params.h.len(), v.h.len())?;
    check("O velocity", params.o.len(), v.o.len())?;
    check("hidden bias velocity", params.hidden_bias.len(), v.hidden_bias.len())?;
    check("output bias velocity", params.output_bias.len(), v.output_bias.len())?;
    check(
        "word embedding velocity",
        params.word_emb.matrix().len(),
        v.word_emb.len(),
    )?;
    check(
        "label embedding velocity",
        params.label_emb.as_ref().map_or(0, |t| t.matrix().len()),
        v.label_emb.as_ref().map_or(0, DenseMatrix::len),
    )?;
    check(
        "R velocity",
        params.r.as_ref().map_or(0, DenseMatrix::len),
        v.r.as_ref().map_or(0, DenseMatrix::len),
    )
}

fn step_dense(params: &mut RnnParameters, grads: &Gradients, v: &mut Velocity, lr: f64, m: f64) {
    step_block(params.h.as_mut_slice(), v.h.as_mut_slice(), grads.h.as_slice(), lr, m);
    step_block(
        params.hidden_bias.as_mut_slice(),
        &mut v.hidden_bias,
        grads.hidden_bias.as_slice(),
        lr,
        m,
    );
    if let (Some(r), Some(vr), Some(gr)) = (&mut params.r, &mut v.r, &grads.r) {
        step_block(r.as_mut_slice(), vr.as_mut_slice(), gr.as_slice(), lr, m);
    }
    step_block(params.o.as_mut_slice(), v.o.as_mut_slice(), grads.o.as_slice(), lr, m);
    step_block(
        params.output_bias.as_mut_slice(),
        &mut v.output_bias,
        grads.output_bias.as_slice(),
        lr,
        m,
    );
}

/// One dense momentum step. Embedding rows absent from `grads` get a zero
/// gradient, so their velocity still decays and moves them.
pub fn sgd_update(
    params: &mut RnnParameters,
    grads: &Gradients,
    velocity: &mut Velocity,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    check_grads(params, grads)?;
    check_velocity(params, velocity)?;
    step_dense(params, grads, velocity, lr, momentum);

    let d = params.dims.emb_dim;
    let zero = vec![0.0; d];
    let word = params.word_emb.matrix_mut();
    for id in 0..word.rows() {
        let g = grads.word_row(id).unwrap_or(&zero);
        step_block(word.row_mut(id), velocity.word_emb.row_mut(id), g, lr, momentum);
    }
    if let (Some(t), Some(vt)) = (&mut params.label_emb, &mut velocity.label_emb) {
        let table = t.matrix_mut();
        for id in 0..table.rows() {
            let g = grads.label_row(id).unwrap_or(&zero);
            step_block(table.row_mut(id), vt.row_mut(id), g, lr, momentum);
        }
    }
    Ok(())
}

/// `idle` zero-gradient momentum steps in closed form.
fn catch_up(m: f64, p: &mut [f64], v: &mut [f64], idle: u64) {
    if idle == 0 {
        return;
    }
    let decay = m.powf(idle as f64);
    let drift = if m == 0.0 { 0.0 } else { m * (1.0 - decay) / (1.0 - m) };
    for (p, v) in p.iter_mut().zip(v.iter_mut()) {
        *p += drift * *v;
        *v *= decay;
    }
}

/// Momentum SGD that touches embedding rows only when they are read.
///
/// An embedding row idle for `k` steps would, under [`sgd_update`], receive
/// `v·(m + m² + … + mᵏ)` and end with velocity `v·mᵏ`; that catch-up is
/// applied in closed form just before the row is next read or written,
/// and for every row by [`MomentumSgd::flush`].
#[derive(Debug, Clone)]
pub struct MomentumSgd {
    lr: f64,
    momentum: f64,
    steps: u64,
    velocity: Velocity,
    word_synced: Vec<u64>,
    label_synced: Vec<u64>,
}

impl MomentumSgd {
    pub fn new(params: &RnnParameters, lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            steps: 0,
            velocity: Velocity::zeros_like(params),
            word_synced: vec![0; params.word_emb.vocab_size()],
            label_synced: vec![0; params.label_emb.as_ref().map_or(0, |t| t.vocab_size())],
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn sync_word(&mut self, params: &mut RnnParameters, id: usize, to: u64) {
        let idle = to - self.word_synced[id];
        catch_up(
            self.momentum,
            params.word_emb.row_mut(id),
            self.velocity.word_emb.row_mut(id),
            idle,
        );
        self.word_synced[id] = to;
    }

    fn sync_label(&mut self, params: &mut RnnParameters, id: usize, to: u64) {
        let (Some(t), Some(vt)) = (&mut params.label_emb, &mut self.velocity.label_emb) else {
            return;
        };
        let idle = to - self.label_synced[id];
        catch_up(self.momentum, t.row_mut(id), vt.row_mut(id), idle);
        self.label_synced[id] = to;
    }

    /// Brings every embedding row read by `ctx` up to date.
    pub fn prepare(&mut self, params: &mut RnnParameters, ctx: &StepContext) {
        for id in ctx.touched_word_rows() {
            self.sync_word(params, id, self.steps);
        }
        for id in ctx.touched_label_rows() {
            self.sync_label(params, id, self.steps);
        }
    }

    pub fn apply(&mut self, params: &mut RnnParameters, grads: &Gradients) -> Result<()> {
        check_grads(params, grads)?;
        let (lr, m) = (self.lr, self.momentum);
        step_dense(params, grads, &mut self.velocity, lr, m);
        let now = self.steps;
        self.steps += 1;
        for (id, g) in &grads.word_rows {
            self.sync_word(params, *id, now);
            step_block(
                params.word_emb.row_mut(*id),
                self.velocity.word_emb.row_mut(*id),
                g,
                lr,
                m,
            );
            self.word_synced[*id] = self.steps;
        }
        for (id, g) in &grads.label_rows {
            self.sync_label(params, *id, now);
            if let (Some(t), Some(vt)) = (&mut params.label_emb, &mut self.velocity.label_emb) {
                step_block(t.row_mut(*id), vt.row_mut(*id), g, lr, m);
            }
            self.label_synced[*id] = self.steps;
        }
        Ok(())
    }

    /// Applies all pending catch-ups; afterwards the parameters equal those of
    /// the dense update sequence.
    pub fn flush(&mut self, params: &mut RnnParameters) {
        for id in 0..self.word_synced.len() {
            self.sync_word(params, id, self.steps);
        }
        for id in 0..self.label_synced.len() {
            self.sync_label(params, id, self.steps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::DenseVector;
    use crate::models::{build_context, Architecture, Dims, SequenceRun};
    use crate::training::backprop::{backprop_step, Regularization};
    use approx::assert_relative_eq;

    fn dims() -> Dims {
        Dims {
            vocab: 9,
            labels: 5,
            emb_dim: 3,
            hidden: 4,
            window: 1,
            context: 2,
        }
    }

    fn max_abs_diff(a: &RnnParameters, b: &RnnParameters) -> f64 {
        let mut xs = Vec::new();
        a.for_each_slice(|_, s| xs.extend_from_slice(s));
        let mut i = 0;
        let mut worst: f64 = 0.0;
        b.for_each_slice(|_, s| {
            for y in s {
                worst = worst.max((xs[i] - y).abs());
                i += 1;
            }
        });
        worst
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut p = RnnParameters::new(Architecture::Elman, dims(), false, 3);
        let before = p.clone();
        let mut g = Gradients::zeros_like(&p);
        g.h.as_mut_slice()
            .iter_mut()
            .enumerate()
            .for_each(|(i, x)| *x = i as f64 * 0.01);
        g.word_rows.push((4, vec![1.0, -2.0, 0.5]));
        let mut v = Velocity::zeros_like(&p);
        sgd_update(&mut p, &g, &mut v, 0.1, 0.0).unwrap();
        for i in 0..p.h.len() {
            assert_relative_eq!(p.h.as_slice()[i], before.h.as_slice()[i] - 0.1 * g.h.as_slice()[i]);
        }
        assert_relative_eq!(p.word_emb.row(4)[1], before.word_emb.row(4)[1] + 0.2);
        assert_eq!(p.word_emb.row(5), before.word_emb.row(5));
    }

    #[test]
    fn velocity_drifts_without_gradient() {
        let mut p = RnnParameters::zeros(Architecture::Jordan, dims(), false);
        let mut v = Velocity::zeros_like(&p);
        v.o.as_mut_slice()[0] = 1.0;
        let g = Gradients::zeros_like(&p);
        sgd_update(&mut p, &g, &mut v, 0.5, 0.9).unwrap();
        sgd_update(&mut p, &g, &mut v, 0.5, 0.9).unwrap();
        assert_relative_eq!(p.o.as_slice()[0], 0.9 + 0.81, epsilon = 1e-15);
        assert_relative_eq!(v.o.as_slice()[0], 0.81, epsilon = 1e-15);
    }

    #[test]
    fn two_steps_on_a_quadratic() {
        // f(θ) = θ²/2 on the output bias: g = θ. θ0 = 1, lr = 0.1, m = 0.9:
        // v1 = −0.1, θ1 = 0.9; v2 = −0.09 − 0.09 = −0.18, θ2 = 0.72.
        let mut p = RnnParameters::zeros(Architecture::IRnn, dims(), false);
        p.output_bias.as_mut_slice()[0] = 1.0;
        let mut v = Velocity::zeros_like(&p);
        for expected in [0.9, 0.72] {
            let mut g = Gradients::zeros_like(&p);
            g.output_bias.as_mut_slice()[0] = p.output_bias[0];
            sgd_update(&mut p, &g, &mut v, 0.1, 0.9).unwrap();
            assert_relative_eq!(p.output_bias[0], expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn l2_pull_shrinks_every_dense_parameter() {
        let mut p = RnnParameters::new(Architecture::IPlusERnn, dims(), false, 5);
        p.hidden_bias = vec![0.3, -0.2, 0.1, 0.4].into();
        p.output_bias = vec![0.1, -0.1, 0.2, 0.3, -0.4].into();
        let mut v = Velocity::zeros_like(&p);
        for _ in 0..5 {
            let before = p.clone();
            let g = Gradients::l2_only(&p, 0.003);
            sgd_update(&mut p, &g, &mut v, 0.01, 0.0).unwrap();
            let mut old = Vec::new();
            before.for_each_slice(|name, s| {
                if !name.ends_with("_emb") {
                    old.extend_from_slice(s)
                }
            });
            let mut i = 0;
            p.for_each_slice(|name, s| {
                if !name.ends_with("_emb") {
                    for x in s {
                        assert!(x.abs() < old[i].abs(), "{name} did not shrink");
                        i += 1;
                    }
                }
            });
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut p = RnnParameters::zeros(Architecture::Elman, dims(), false);
        let other = RnnParameters::zeros(Architecture::IRnn, dims(), false);
        let mut v = Velocity::zeros_like(&p);
        assert!(sgd_update(&mut p, &Gradients::zeros_like(&other), &mut v, 0.1, 0.9).is_err());
        let mut g = Gradients::zeros_like(&p);
        g.word_rows.push((99, vec![0.0; 3]));
        assert!(sgd_update(&mut p, &g, &mut v, 0.1, 0.9).is_err());
        let mut small = Velocity::zeros_like(&other);
        let zero = Gradients::zeros_like(&p);
        assert!(sgd_update(&mut p, &zero, &mut small, 0.1, 0.9).is_err());
    }

    #[test]
    fn lazy_rows_match_dense_updates() {
        for arch in Architecture::ALL {
            let mut dense = RnnParameters::new(arch, dims(), false, 11);
            let mut lazy = dense.clone();
            let mut v = Velocity::zeros_like(&dense);
            let mut opt = MomentumSgd::new(&lazy, 0.2, 0.9);
            let reg = Regularization {
                lambda: 0.01,
                embeddings: true,
            };
            let seqs: [&[usize]; 3] = [&[3, 4, 5, 6], &[7, 8], &[4, 4, 3]];
            let golds: [&[usize]; 3] = [&[3, 4, 3, 2], &[4, 4], &[2, 3, 3]];
            for (words, gold) in seqs.iter().zip(golds) {
                let mut run = SequenceRun::default();
                for (t, &g) in gold.iter().enumerate() {
                    let ctx_d = build_context(&dense, words, t, &run, None);
                    let gd = backprop_step(&dense, &ctx_d, g, reg).unwrap();
                    sgd_update(&mut dense, &gd.grads, &mut v, 0.2, 0.9).unwrap();

                    let ctx_l = build_context(&lazy, words, t, &run, None);
                    opt.prepare(&mut lazy, &ctx_l);
                    let gl = backprop_step(&lazy, &ctx_l, g, reg).unwrap();
                    opt.apply(&mut lazy, &gl.grads).unwrap();

                    run.labels.push(g);
                    run.hiddens.push(gd.trace.hidden);
                    run.outputs.push(DenseVector::one_hot(5, g));
                }
            }
            opt.flush(&mut lazy);
            assert_eq!(opt.steps(), 9);
            assert!(
                max_abs_diff(&dense, &lazy) < 1e-12,
                "{arch}: {}",
                max_abs_diff(&dense, &lazy)
            );
        }
    }
}
