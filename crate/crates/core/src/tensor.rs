//! Dense row-major `f64` tensors and the forward kernels shared by the tape.
//!
//! Tensors of rank 1 are treated as column vectors wherever a matrix is
//! expected, so a `[n]` tensor and an `[n, 1]` tensor behave identically in
//! every kernel. Broadcasting is limited to scalars; everything else must be
//! aligned explicitly by the caller.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Domain(alloc::format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// A rank-1 tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// An `[n, 1]` column.
    pub fn column(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len(), 1],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// `(rows, cols)` under the column-vector convention. Panics above rank 2.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (*n, 1),
            [r, c] => (*r, *c),
            _ => panic!("dims2 on rank-{} tensor", self.shape.len()),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims2().0
    }

    pub fn cols(&self) -> usize {
        self.dims2().1
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = value;
    }

    pub fn column_at(&self, c: usize) -> Vec<f64> {
        let (rows, cols) = self.dims2();
        (0..rows).map(|r| self.data[r * cols + c]).collect()
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return dim_err("reshape", &self.shape, shape);
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn matrix_shape(&self) -> bool {
        self.shape.len() <= 2
    }
}

/// Standard matrix product `[m, k] x [k, n] -> [m, n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !a.matrix_shape() || !b.matrix_shape() {
        return dim_err("matmul", a.shape(), b.shape());
    }
    let (m, k) = a.dims2();
    let (k2, n) = b.dims2();
    if k != k2 {
        return dim_err("matmul", a.shape(), b.shape());
    }
    let mut out = vec![0.0; m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Tensor::matrix(m, n, out)
}

pub fn transpose(a: &Tensor) -> Tensor {
    let (m, n) = a.dims2();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data[i * n + j];
        }
    }
    Tensor {
        shape: vec![n, m],
        data: out,
    }
}

/// Numerically stable softmax of a slice, written into `out`.
pub(crate) fn softmax_into(v: &[f64], out: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = libm::exp(x - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Softmax of a vector (rank 1, or a single column).
pub fn softmax(v: &Tensor) -> Result<Tensor> {
    if v.is_empty() {
        return Err(Error::Domain("softmax of an empty tensor".into()));
    }
    if v.rank() > 2 || v.cols() != 1 {
        return dim_err("softmax", v.shape(), &[v.len()]);
    }
    let mut out = vec![0.0; v.len()];
    softmax_into(v.data(), &mut out);
    Ok(Tensor {
        shape: v.shape.clone(),
        data: out,
    })
}

/// Softmax applied independently to every column of a matrix.
pub fn softmax_columns(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2();
    if m == 0 {
        return Err(Error::Domain("softmax over zero rows".into()));
    }
    let mut out = vec![0.0; m * n];
    let mut col = vec![0.0; m];
    let mut res = vec![0.0; m];
    for j in 0..n {
        for i in 0..m {
            col[i] = a.data[i * n + j];
        }
        softmax_into(&col, &mut res);
        for i in 0..m {
            out[i * n + j] = res[i];
        }
    }
    Ok(Tensor {
        shape: a.shape.clone(),
        data: out,
    })
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(libm::tanh)
}

/// Concatenate matrices along `axis` (0 = stack rows, 1 = place columns side by side).
pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Domain("concat of zero parts".into()))?;
    let rank1 = parts.iter().all(|p| p.rank() == 1);
    match axis {
        0 => {
            let cols = first.cols();
            let mut data = Vec::new();
            let mut rows = 0;
            for p in parts {
                if p.cols() != cols {
                    return dim_err("concat", first.shape(), p.shape());
                }
                rows += p.rows();
                data.extend_from_slice(p.data());
            }
            let shape = if rank1 { vec![rows] } else { vec![rows, cols] };
            Tensor::new(shape, data)
        }
        1 => {
            let rows = first.rows();
            for p in parts {
                if p.rows() != rows {
                    return dim_err("concat", first.shape(), p.shape());
                }
            }
            let cols: usize = parts.iter().map(|p| p.cols()).sum();
            let mut data = vec![0.0; rows * cols];
            let mut offset = 0;
            for p in parts {
                let pc = p.cols();
                for r in 0..rows {
                    data[r * cols + offset..r * cols + offset + pc]
                        .copy_from_slice(&p.data()[r * pc..(r + 1) * pc]);
                }
                offset += pc;
            }
            Tensor::matrix(rows, cols, data)
        }
        _ => Err(Error::Domain(alloc::format!("concat axis {axis} not supported"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = a.len();
        let n = b[0].len();
        let k = b.len();
        let mut out = vec![vec![0.0; n]; m];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i][j] += a[i][p] * b[p][j];
                }
            }
        }
        out
    }

    #[test]
    fn identity_times_matrix() {
        let b = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&Tensor::identity(2), &b).unwrap(), b);
    }

    #[test]
    fn matrix_times_zero_column() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let z = Tensor::matrix(2, 1, vec![0.0, 0.0]).unwrap();
        assert_eq!(matmul(&a, &z).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = crate::rng::XorShift64Star::new(11);
        let a: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let expected = naive_matmul(&a, &b);
        let ta = Tensor::matrix(3, 4, a.concat()).unwrap();
        let tb = Tensor::matrix(4, 2, b.concat()).unwrap();
        let got = matmul(&ta, &tb).unwrap();
        assert_eq!(got.data(), expected.concat().as_slice());
    }

    #[test]
    fn matmul_shape_error_names_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        match matmul(&a, &b) {
            Err(Error::Dimension { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 3]);
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn softmax_cases() {
        let s = softmax(&Tensor::vector(vec![0.0, 0.0, 0.0])).unwrap();
        for &p in s.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&Tensor::vector(vec![1000.0, 0.0])).unwrap();
        assert!(s.is_finite());
        assert_eq!(s.data(), &[1.0, 0.0]);

        // direct exp/normalize oracle
        let (e1, e2, e3) = (libm::exp(1.0), libm::exp(2.0), libm::exp(3.0));
        let total = e1 + e2 + e3;
        let expected = [e1 / total, e2 / total, e3 / total];
        let s = softmax(&Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        for (a, b) in s.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!(matches!(
            softmax(&Tensor::vector(vec![])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn elementwise_and_concat() {
        assert_eq!(sigmoid(&Tensor::scalar(0.0)).item(), 0.5);
        assert_eq!(tanh(&Tensor::scalar(0.0)).item(), 0.0);
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0, 4.0, 5.0]);
        let c = concat(&[&a, &b], 0).unwrap();
        assert_eq!(c.shape(), &[5]);
        assert_eq!(&c.data()[..2], a.data());
        let m = Tensor::zeros(&[3, 2]);
        assert!(matches!(
            concat(&[&m, &a], 1),
            Err(Error::Dimension { .. })
        ));
    }
}
