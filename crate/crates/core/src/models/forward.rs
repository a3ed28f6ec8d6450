//! Single-step forward computations.

use super::arch::Architecture;
use super::context::StepContext;
use super::params::RnnParameters;
use crate::error::{Error, Result};
use crate::math::{argmax, softmax_in_place, DenseVector};

/// Intermediate values of one forward step, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// Vector multiplied by `H`: word window, then past and future label embeddings.
    pub input: Vec<f64>,
    /// Vector multiplied by `R`: past history, then future history.
    pub recurrent: Vec<f64>,
    pub hidden: DenseVector,
    pub output: DenseVector,
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::dim(what, expected, found))
    }
}

fn push_vectors(out: &mut Vec<f64>, what: &'static str, vs: &[DenseVector], count: usize, width: usize) -> Result<()> {
    check_len(what, count, vs.len())?;
    for v in vs {
        check_len(what, width, v.len())?;
        out.extend_from_slice(v.as_slice());
    }
    Ok(())
}

fn push_labels(out: &mut Vec<f64>, params: &RnnParameters, what: &'static str, ids: &[usize]) -> Result<()> {
    check_len(what, params.dims.context, ids.len())?;
    let table = params
        .label_emb
        .as_ref()
        .ok_or_else(|| Error::Architecture(format!("{} has no label embeddings", params.arch)))?;
    for &id in ids {
        out.extend_from_slice(table.try_row(id)?);
    }
    Ok(())
}

impl RnnParameters {
    /// Concatenates the inputs of `H` and `R` for this context.
    pub fn assemble_inputs(&self, ctx: &StepContext) -> Result<(Vec<f64>, Vec<f64>)> {
        let layout = self.layout();
        let dims = &self.dims;
        let c = dims.context;

        let mut input = Vec::with_capacity(layout.hidden_input());
        check_len("word window", dims.window_len(), ctx.word_window.len())?;
        for &id in &ctx.word_window {
            input.extend_from_slice(self.word_emb.try_row(id)?);
        }
        let mut recurrent = Vec::with_capacity(layout.recurrent_input());
        let history_width = match self.arch {
            Architecture::Jordan => dims.labels,
            _ => dims.hidden,
        };

        if self.arch.uses_label_embeddings() {
            push_labels(&mut input, self, "previous labels", &ctx.prev_labels)?;
        }
        if self.arch.uses_hidden_history() {
            push_vectors(
                &mut recurrent,
                "previous hidden states",
                &ctx.prev_hiddens,
                c,
                history_width,
            )?;
        }
        if self.arch.uses_output_history() {
            push_vectors(&mut recurrent, "previous outputs", &ctx.prev_outputs, c, history_width)?;
        }

        let has_future = ctx.future_labels.is_some() || ctx.future_hiddens.is_some() || ctx.future_outputs.is_some();
        if self.bidirectional {
            let missing = || Error::Architecture("bidirectional stage needs future context".into());
            if self.arch.uses_label_embeddings() {
                push_labels(
                    &mut input,
                    self,
                    "future labels",
                    ctx.future_labels.as_ref().ok_or_else(missing)?,
                )?;
            }
            if self.arch.uses_hidden_history() {
                let fut = ctx.future_hiddens.as_ref().ok_or_else(missing)?;
                push_vectors(&mut recurrent, "future hidden states", fut, c, history_width)?;
            }
            if self.arch.uses_output_history() {
                let fut = ctx.future_outputs.as_ref().ok_or_else(missing)?;
                push_vectors(&mut recurrent, "future outputs", fut, c, history_width)?;
            }
        } else if has_future {
            return Err(Error::Architecture(
                "future context given to a unidirectional network".into(),
            ));
        }
        debug_assert_eq!(input.len(), layout.hidden_input());
        debug_assert_eq!(recurrent.len(), layout.recurrent_input());
        Ok((input, recurrent))
    }

    pub(crate) fn hidden_from_inputs(&self, input: &[f64], recurrent: &[f64]) -> DenseVector {
        let mut z = self.hidden_bias.clone();
        self.h.accumulate_left_product(input, z.as_mut_slice());
        if let Some(r) = &self.r {
            r.accumulate_left_product(recurrent, z.as_mut_slice());
        }
        for v in z.as_mut_slice() {
            *v = self.activation.apply(*v);
        }
        z
    }

    pub fn hidden_state(&self, ctx: &StepContext) -> Result<DenseVector> {
        let (input, recurrent) = self.assemble_inputs(ctx)?;
        Ok(self.hidden_from_inputs(&input, &recurrent))
    }

    /// Full forward step: hidden layer then output distribution.
    pub fn step(&self, ctx: &StepContext) -> Result<StepTrace> {
        let (input, recurrent) = self.assemble_inputs(ctx)?;
        let hidden = self.hidden_from_inputs(&input, &recurrent);
        let output = output_distribution(self, &hidden)?;
        Ok(StepTrace {
            input,
            recurrent,
            hidden,
            output,
        })
    }
}

fn expect_arch(params: &RnnParameters, arch: Architecture) -> Result<()> {
    if params.arch == arch {
        Ok(())
    } else {
        Err(Error::Architecture(format!(
            "expected {arch} parameters, got {}",
            params.arch
        )))
    }
}

/// `h_t = Σ(I_t·H + [h_{t-c} … h_{t-1}]·R + b)`
pub fn hidden_elman(params: &RnnParameters, ctx: &StepContext) -> Result<DenseVector> {
    expect_arch(params, Architecture::Elman)?;
    params.hidden_state(ctx)
}

/// `h_t = Σ(I_t·H + [y_{t-c} … y_{t-1}]·R + b)`, with `prev_outputs` either
/// distributions or one-hot vectors.
pub fn hidden_jordan(params: &RnnParameters, ctx: &StepContext, prev_outputs: &[DenseVector]) -> Result<DenseVector> {
    expect_arch(params, Architecture::Jordan)?;
    let ctx = StepContext {
        prev_outputs: prev_outputs.to_vec(),
        ..ctx.clone()
    };
    params.hidden_state(&ctx)
}

/// `h_t = Σ([I_t L_t]·H + b)`
pub fn hidden_irnn(params: &RnnParameters, ctx: &StepContext) -> Result<DenseVector> {
    expect_arch(params, Architecture::IRnn)?;
    params.hidden_state(ctx)
}

/// `h_t = Σ([I_t L_t]·H + [h_{t-c} … h_{t-1}]·R + b)`
pub fn hidden_iplus(params: &RnnParameters, ctx: &StepContext) -> Result<DenseVector> {
    expect_arch(params, Architecture::IPlusERnn)?;
    params.hidden_state(ctx)
}

/// `softmax(h·O + b)`
pub fn output_distribution(params: &RnnParameters, hidden: &DenseVector) -> Result<DenseVector> {
    if hidden.len() != params.dims.hidden {
        return Err(Error::dim("output layer input", params.dims.hidden, hidden.len()));
    }
    let mut y = params.output_bias.clone();
    params.o.accumulate_left_product(hidden.as_slice(), y.as_mut_slice());
    softmax_in_place(y.as_mut_slice())?;
    Ok(y)
}

/// Most probable label; ties go to the lowest index.
pub fn decide(y: &DenseVector) -> usize {
    argmax(y.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BOS_LABEL_ID;
    use crate::math::{init_matrix, sigmoid_scalar, DenseMatrix};
    use crate::models::context::{build_context, SequenceRun};
    use crate::models::params::Dims;
    use approx::assert_relative_eq;

    fn dims(context: usize) -> Dims {
        Dims {
            vocab: 6,
            labels: 5,
            emb_dim: 2,
            hidden: 2,
            window: 0,
            context,
        }
    }

    fn v(x: &[f64]) -> DenseVector {
        x.to_vec().into()
    }

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn ctx_words(words: &[usize]) -> StepContext {
        StepContext {
            word_window: words.to_vec(),
            ..Default::default()
        }
    }

    #[test]
    fn zero_parameters_give_half_hidden_and_uniform_output() {
        for arch in Architecture::ALL {
            let p = RnnParameters::zeros(arch, dims(2), false);
            let ctx = build_context(&p, &[3, 4], 1, &run_of(&p, 1), None);
            let h = p.hidden_state(&ctx).unwrap();
            assert!(h.as_slice().iter().all(|&x| x == 0.5), "{arch}");
            let y = output_distribution(&p, &h).unwrap();
            assert!(y.as_slice().iter().all(|&x| x == 0.2));
            assert_eq!(decide(&y), 0);
        }
    }

    fn run_of(p: &RnnParameters, len: usize) -> SequenceRun {
        SequenceRun {
            labels: vec![3; len],
            hiddens: vec![DenseVector::from(vec![0.3; p.dims.hidden]); len],
            outputs: vec![DenseVector::one_hot(p.dims.labels, 3); len],
        }
    }

    #[test]
    fn elman_hand_computed() {
        let mut p = RnnParameters::zeros(Architecture::Elman, dims(1), false);
        p.word_emb.set_row(3, &[1.0, 2.0]).unwrap();
        p.h = m(&[&[0.5, -1.0], &[0.25, 0.5]]);
        p.r = Some(m(&[&[1.0, 0.0], &[2.0, -1.0]]));
        p.hidden_bias = v(&[0.1, -0.2]);
        let ctx = StepContext {
            prev_hiddens: vec![v(&[0.2, 0.4])],
            ..ctx_words(&[3])
        };
        // I·H = [1*0.5 + 2*0.25, 1*-1 + 2*0.5] = [1.0, 0.0]
        // h_prev·R = [0.2 + 0.8, -0.4] = [1.0, -0.4]
        let expected = [sigmoid_scalar(2.1), sigmoid_scalar(-0.6)];
        let h = hidden_elman(&p, &ctx).unwrap();
        assert_relative_eq!(h[0], expected[0], epsilon = 1e-15);
        assert_relative_eq!(h[1], expected[1], epsilon = 1e-15);
        assert!(hidden_irnn(&p, &ctx).is_err());
    }

    #[test]
    fn jordan_hand_computed_and_row_selection() {
        let d = Dims { labels: 2, ..dims(1) };
        let mut p = RnnParameters::zeros(Architecture::Jordan, d, false);
        p.word_emb.set_row(4, &[1.0, -1.0]).unwrap();
        p.h = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        p.r = Some(m(&[&[0.3, -0.7], &[1.5, 0.5]]));
        let ctx = ctx_words(&[4]);
        // distribution [0.25, 0.75]: y·R = [0.075 + 1.125, -0.175 + 0.375] = [1.2, 0.2]
        let h = hidden_jordan(&p, &ctx, &[v(&[0.25, 0.75])]).unwrap();
        assert_relative_eq!(h[0], sigmoid_scalar(1.0 + 1.2), epsilon = 1e-15);
        assert_relative_eq!(h[1], sigmoid_scalar(-1.0 + 0.2), epsilon = 1e-15);
        // one-hot selects a row of R
        let h = hidden_jordan(&p, &ctx, &[DenseVector::one_hot(2, 1)]).unwrap();
        assert_eq!(h.as_slice(), &[sigmoid_scalar(1.0 + 1.5), sigmoid_scalar(-1.0 + 0.5)]);
        assert!(hidden_jordan(&p, &ctx, &[v(&[1.0, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn irnn_hand_computed() {
        let mut p = RnnParameters::zeros(Architecture::IRnn, dims(1), false);
        p.word_emb.set_row(3, &[1.0, 0.5]).unwrap();
        p.label_emb.as_mut().unwrap().set_row(4, &[-2.0, 1.0]).unwrap();
        p.h = m(&[&[1.0, 0.0], &[0.0, 2.0], &[0.5, 0.5], &[1.0, -1.0]]);
        let ctx = StepContext {
            prev_labels: vec![4],
            ..ctx_words(&[3])
        };
        // [1, 0.5, -2, 1]·H = [1 - 1 + 1, 1 - 1 - 1] = [1, -1]
        let h = hidden_irnn(&p, &ctx).unwrap();
        assert_relative_eq!(h[0], sigmoid_scalar(1.0), epsilon = 1e-15);
        assert_relative_eq!(h[1], sigmoid_scalar(-1.0), epsilon = 1e-15);
    }

    #[test]
    fn irnn_start_uses_bos_embedding() {
        let p = RnnParameters::new(Architecture::IRnn, dims(3), false, 4);
        let ctx = build_context(&p, &[3, 4, 5], 0, &SequenceRun::default(), None);
        assert_eq!(ctx.prev_labels, vec![BOS_LABEL_ID; 3]);
        let (input, _) = p.assemble_inputs(&ctx).unwrap();
        let bos = p.label_emb.as_ref().unwrap().row(BOS_LABEL_ID);
        for k in 0..3 {
            assert_eq!(&input[2 + 2 * k..4 + 2 * k], bos);
        }
    }

    #[test]
    fn iplus_reductions() {
        let mut p = RnnParameters::new(Architecture::IPlusERnn, dims(2), false, 9);
        let mut irnn = RnnParameters::zeros(Architecture::IRnn, dims(2), false);
        irnn.word_emb = p.word_emb.clone();
        irnn.label_emb = p.label_emb.clone();
        irnn.h = p.h.clone();
        irnn.hidden_bias = v(&[0.3, -0.1]);
        p.hidden_bias = irnn.hidden_bias.clone();
        let ctx = StepContext {
            prev_labels: vec![3, 4],
            prev_hiddens: vec![v(&[0.1, 0.9]), v(&[0.6, 0.2])],
            ..ctx_words(&[5])
        };
        let r = p.r.clone().unwrap();
        p.r = Some(DenseMatrix::zeros(r.rows(), r.cols()));
        assert_eq!(hidden_iplus(&p, &ctx).unwrap(), hidden_irnn(&irnn, &ctx).unwrap());

        // with H and bias zero, only the hidden-history term remains
        p.r = Some(r.clone());
        p.h = DenseMatrix::zeros(p.h.rows(), p.h.cols());
        p.hidden_bias = DenseVector::zeros(2);
        let hist = [0.1, 0.9, 0.6, 0.2];
        let h = hidden_iplus(&p, &ctx).unwrap();
        for j in 0..2 {
            let z: f64 = (0..4).map(|i| hist[i] * r.get(i, j)).sum();
            assert_relative_eq!(h[j], sigmoid_scalar(z), epsilon = 1e-15);
        }
    }

    #[test]
    fn output_distribution_properties() {
        let p = RnnParameters::new(Architecture::IRnn, dims(1), false, 2);
        let mut p2 = p.clone();
        p2.o = init_matrix(2, 5, 3, Some(2.0));
        let h = v(&[0.3, 0.8]);
        let y = output_distribution(&p2, &h).unwrap();
        assert_relative_eq!(y.sum(), 1.0, epsilon = 1e-12);
        let mut logits = p2.output_bias.clone();
        p2.o.accumulate_left_product(h.as_slice(), logits.as_mut_slice());
        assert_eq!(decide(&y), argmax(logits.as_slice()));
        assert!(output_distribution(&p, &v(&[0.3])).is_err());
    }

    #[test]
    fn decide_examples() {
        assert_eq!(decide(&v(&[0.1, 0.7, 0.2])), 1);
        assert_eq!(decide(&v(&[0.25; 4])), 0);
        let logits = [0.3, -1.0, 2.5, 2.4];
        let squashed: Vec<f64> = logits.iter().map(|x: &f64| x.exp() * 3.0 + 1.0).collect();
        assert_eq!(argmax(&logits), decide(&squashed.into()));
    }

    #[test]
    fn unidirectional_rejects_future_context() {
        let p = RnnParameters::new(Architecture::IRnn, dims(1), false, 2);
        let ctx = StepContext {
            prev_labels: vec![3],
            future_labels: Some(vec![3]),
            ..ctx_words(&[3])
        };
        assert!(matches!(p.step(&ctx), Err(Error::Architecture(_))));
        let bidi = RnnParameters::new(Architecture::IRnn, dims(1), true, 2);
        let ctx = StepContext {
            prev_labels: vec![3],
            ..ctx_words(&[3])
        };
        assert!(matches!(bidi.step(&ctx), Err(Error::Architecture(_))));
    }
}
