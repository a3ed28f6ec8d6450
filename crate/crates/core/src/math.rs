//! Dense vector and matrix kernels shared by every model.
//!
//! Vectors are treated as row vectors: `affine(x, W, b)` computes `xᵀW + b`
//! with `W` shaped `input × output`. This matches the layer equations, where
//! the concatenated input is multiplied on the left of each weight matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.data[index] = 1.0;
        v
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "matrix construction",
                format!("{} values for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::dim("matrix rows", cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// `out += xᵀ · self`; `x.len() == rows`, `out.len() == cols`.
    pub(crate) fn accumulate_left_product(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xr * w;
            }
        }
    }

    /// `out += self · delta`; `delta.len() == cols`, `out.len() == rows`.
    pub(crate) fn accumulate_right_product(&self, delta: &[f64], out: &mut [f64]) {
        debug_assert_eq!(delta.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o += row.iter().zip(delta).map(|(w, d)| w * d).sum::<f64>();
        }
    }

    /// `self += x ⊗ delta`.
    pub(crate) fn add_outer(&mut self, x: &[f64], delta: &[f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(delta.len(), self.cols);
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, &d) in row.iter_mut().zip(delta) {
                *w += xr * d;
            }
        }
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &DenseVector) -> DenseVector {
    x.data.iter().map(|&v| sigmoid_scalar(v)).collect::<Vec<_>>().into()
}

pub fn softmax(x: &DenseVector) -> Result<DenseVector> {
    let mut out = x.clone();
    softmax_in_place(out.as_mut_slice())?;
    Ok(out)
}

pub(crate) fn softmax_in_place(x: &mut [f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InvalidLayerSize("softmax over an empty vector".into()));
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
    Ok(())
}

pub fn affine(x: &DenseVector, w: &DenseMatrix, b: &DenseVector) -> Result<DenseVector> {
    if x.len() != w.rows || b.len() != w.cols {
        return Err(Error::dim(
            "affine",
            format!("x[{}] with W[{}x{}] and b[{}]", w.rows, w.rows, w.cols, w.cols),
            format!("x[{}] with W[{}x{}] and b[{}]", x.len(), w.rows, w.cols, b.len()),
        ));
    }
    let mut out = b.clone();
    w.accumulate_left_product(x.as_slice(), out.as_mut_slice());
    Ok(out)
}

pub fn concat(parts: &[&DenseVector]) -> Result<DenseVector> {
    if parts.is_empty() {
        return Err(Error::InvalidInput("concat of an empty list".into()));
    }
    let total = parts.iter().map(|p| p.len()).sum();
    let mut data = Vec::with_capacity(total);
    for p in parts {
        data.extend_from_slice(p.as_slice());
    }
    Ok(data.into())
}

/// Default initialization scale for a matrix with `rows` inputs.
pub fn fan_in_scale(rows: usize) -> f64 {
    1.0 / (rows.max(1) as f64).sqrt()
}

/// I.i.d. uniform entries in `[-scale, scale]`; `None` uses the fan-in default.
pub fn init_matrix(rows: usize, cols: usize, seed: u64, scale: Option<f64>) -> DenseMatrix {
    let scale = scale.unwrap_or_else(|| fan_in_scale(rows)).abs();
    if scale == 0.0 {
        return DenseMatrix::zeros(rows, cols);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect();
    DenseMatrix { rows, cols, data }
}

/// Derives an independent seed for a named sub-stream of a run seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DenseVector {
        x.to_vec().into()
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(&v(&[0.0])).as_slice(), &[0.5]);
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert_relative_eq!(sigmoid(&v(&[2.0]))[0], expected, epsilon = 1e-15);
        assert_relative_eq!(expected, 0.880797, epsilon = 1e-6);
        let s = sigmoid(&v(&[-3.7, 3.7]));
        assert_relative_eq!(s[0], 1.0 - s[1], epsilon = 1e-15);
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        let s = sigmoid(&v(&[-800.0, 800.0]));
        assert!(s.is_finite());
        assert_eq!(s[0], 0.0);
        assert_eq!(s[1], 1.0);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&v(&[0.0, 0.0])).unwrap().as_slice(), &[0.5, 0.5]);
        let p = softmax(&v(&[1.0, 2.0, 3.0])).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).sum();
        for (i, x) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert_relative_eq!(p[i], x.exp() / z, epsilon = 1e-15);
        }
        assert_relative_eq!(p[0], 0.09003, epsilon = 1e-5);
        assert_relative_eq!(p[1], 0.24473, epsilon = 1e-5);
        assert_relative_eq!(p[2], 0.66524, epsilon = 1e-5);
    }

    #[test]
    fn softmax_large_logits_are_stable() {
        let p = softmax(&v(&[1000.0, 1001.0])).unwrap();
        assert!(p.is_finite());
        assert_relative_eq!(p.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(matches!(
            softmax(&DenseVector::zeros(0)),
            Err(Error::InvalidLayerSize(_))
        ));
    }

    #[test]
    fn affine_examples() {
        let id = DenseMatrix::identity(2);
        assert_eq!(
            affine(&v(&[1.0, 0.0]), &id, &v(&[0.0, 0.0])).unwrap().as_slice(),
            &[1.0, 0.0]
        );
        let w = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(
            affine(&v(&[0.0, 0.0]), &w, &v(&[3.0, 4.0])).unwrap().as_slice(),
            &[3.0, 4.0]
        );
        assert_eq!(
            affine(&v(&[1.0, 2.0]), &w, &v(&[0.0, 0.0])).unwrap().as_slice(),
            &[7.0, 10.0]
        );
    }

    #[test]
    fn affine_shape_error_names_shapes() {
        let w = DenseMatrix::zeros(3, 2);
        let err = affine(&v(&[1.0, 2.0]), &w, &v(&[0.0, 0.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3x2"), "{msg}");
        assert!(msg.contains("x[2]"), "{msg}");
    }

    #[test]
    fn concat_examples() {
        let a = v(&[1.0]);
        let b = v(&[2.0, 3.0]);
        assert_eq!(concat(&[&a, &b]).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(concat(&[&b]).unwrap(), b);
        assert!(concat(&[]).is_err());
    }

    #[test]
    fn init_matrix_is_deterministic() {
        let a = init_matrix(7, 5, 11, Some(0.3));
        let b = init_matrix(7, 5, 11, Some(0.3));
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|x| x.abs() <= 0.3));
        assert_ne!(a, init_matrix(7, 5, 12, Some(0.3)));
        assert!(init_matrix(4, 4, 1, Some(0.0)).as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_matrix_default_scale_is_fan_in() {
        let m = init_matrix(16, 50, 3, None);
        assert!(m.as_slice().iter().all(|x| x.abs() <= 0.25));
        assert!(m.as_slice().iter().any(|x| x.abs() > 0.2));
    }

    #[test]
    fn init_matrix_mean_is_centered() {
        let scale = 1.0;
        let m = init_matrix(100, 100, 99, Some(scale));
        let n = m.len() as f64;
        let mean = m.as_slice().iter().sum::<f64>() / n;
        // uniform[-s, s] has standard deviation s/sqrt(3)
        let std_err = scale / 3f64.sqrt() / n.sqrt();
        assert!(mean.abs() < 3.0 * std_err, "mean {mean} vs 3se {}", 3.0 * std_err);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.25; 4]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(x in prop::collection::vec(-50.0f64..50.0, 1..200)) {
            let p = softmax(&x.clone().into()).unwrap();
            prop_assert!((p.sum() - 1.0).abs() < 1e-12);
            prop_assert!(p.as_slice().iter().all(|&q| q > 0.0));
        }

        #[test]
        fn softmax_is_shift_invariant(x in prop::collection::vec(-20.0f64..20.0, 1..20), c in -100.0f64..100.0) {
            let p = softmax(&x.clone().into()).unwrap();
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let q = softmax(&shifted.into()).unwrap();
            for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn sigmoid_antisymmetry(x in prop::collection::vec(-40.0f64..40.0, 1..50)) {
            let pos = sigmoid(&x.clone().into());
            let neg = sigmoid(&x.iter().map(|v| -v).collect::<Vec<_>>().into());
            for (a, b) in pos.as_slice().iter().zip(neg.as_slice()) {
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn affine_is_linear(
            x in prop::collection::vec(-5.0f64..5.0, 4),
            y in prop::collection::vec(-5.0f64..5.0, 4),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            seed in any::<u64>(),
        ) {
            let w = init_matrix(4, 3, seed, Some(1.0));
            let zero = DenseVector::zeros(3);
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = affine(&mix.into(), &w, &zero).unwrap();
            let fx = affine(&x.into(), &w, &zero).unwrap();
            let fy = affine(&y.into(), &w, &zero).unwrap();
            for i in 0..3 {
                let rhs = a * fx[i] + b * fy[i];
                let scale = lhs[i].abs().max(rhs.abs()).max(1e-12);
                prop_assert!((lhs[i] - rhs).abs() / scale < 1e-9 || (lhs[i] - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn concat_length_adds(a in prop::collection::vec(-1.0f64..1.0, 0..30), b in prop::collection::vec(-1.0f64..1.0, 0..30)) {
            let (va, vb): (DenseVector, DenseVector) = (a.clone().into(), b.clone().into());
            let c = concat(&[&va, &vb]).unwrap();
            prop_assert_eq!(c.len(), a.len() + b.len());
            prop_assert_eq!(&c.as_slice()[..a.len()], &a[..]);
        }
    }
}
