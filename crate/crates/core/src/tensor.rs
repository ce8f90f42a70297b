//! Dense data tensors, multilinear multiplication and the architecture builders.
//!
//! A linear tensor network computes `f(x) = M(x) ∘ (v1, …, vL)`, where `M(x)` is
//! linear in `x` and the contraction is taken over every mode. Indices here are
//! 0-based; the convolution builder maps the shifted 1-based index
//! `(Σ j_l − L + 1) mod d` to `(Σ j_l) % d` on 0-based indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::{dot, norm, Matrix};
use crate::tol;

/// Dense tensor stored row-major (last index fastest).
///
/// Data tensors built from an architecture have order ≥ 2. Contractions may
/// yield lower orders, down to a scalar of order 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn checked_size(shape: &[usize]) -> Result<usize> {
    let mut n: u128 = 1;
    for &k in shape {
        if k == 0 {
            return Err(Error::Shape(format!("zero-length mode in shape {shape:?}")));
        }
        n = n.saturating_mul(k as u128);
    }
    if n > tol::MAX_TENSOR_ENTRIES as u128 {
        return Err(Error::TooLarge {
            entries: n,
            cap: tol::MAX_TENSOR_ENTRIES,
        });
    }
    Ok(n as usize)
}

impl DataTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = checked_size(&shape)?;
        if data.len() != n {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = checked_size(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; n],
        })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            shape: vec![m.rows(), m.cols()],
            data: m.data().to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of an order-0 tensor.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.shape.is_empty()).then(|| self.data[0])
    }

    /// Reads an order-2 tensor as a matrix.
    pub fn to_matrix(&self) -> Option<Matrix> {
        if self.shape.len() != 2 {
            return None;
        }
        Matrix::from_vec(self.shape[0], self.shape[1], self.data.clone()).ok()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &k)| acc * k + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    /// Entrywise `self + c·other`.
    pub fn axpy(&mut self, c: f64, other: &DataTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot add tensors of shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &DataTensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot compare tensors of shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Calls `f(multi_index, value)` for every nonzero entry.
    pub fn for_each_nonzero<F: FnMut(&[usize], f64)>(&self, mut f: F) {
        let mut idx = vec![0usize; self.shape.len()];
        for &v in &self.data {
            if v != 0.0 {
                f(&idx, v);
            }
            for m in (0..idx.len()).rev() {
                idx[m] += 1;
                if idx[m] < self.shape[m] {
                    break;
                }
                idx[m] = 0;
            }
        }
    }
}

/// How one mode is treated by [`multilinear_mul`].
#[derive(Debug, Clone, Copy)]
pub enum ModeMap<'a> {
    /// Leave the mode untouched.
    Identity,
    /// Replace the mode of size k by one of size p using a p×k matrix B, i.e.
    /// the mode is multiplied by Bᵀ in the `A ∘ (B1ᵀ, …)` notation.
    Matrix(&'a Matrix),
    /// Contract the mode away against a vector of length k.
    Vector(&'a [f64]),
}

/// Computes `A ∘ (B1ᵀ, …, BLᵀ)`: entry `(i1, …, iL)` of the result is
/// `Σ_j A[j1, …, jL] · B1[i1, j1] ⋯ BL[iL, jL]`.
///
/// Vector maps remove their mode; if every map is a vector the result has
/// order 0 (see [`DataTensor::as_scalar`]).
pub fn multilinear_mul(a: &DataTensor, maps: &[ModeMap<'_>]) -> Result<DataTensor> {
    if maps.len() != a.order() {
        return Err(Error::Shape(format!(
            "tensor of order {} needs {} mode maps, got {}",
            a.order(),
            a.order(),
            maps.len()
        )));
    }
    for (l, m) in maps.iter().enumerate() {
        let expected = a.shape[l];
        let got = match m {
            ModeMap::Identity => expected,
            ModeMap::Matrix(b) => b.cols(),
            ModeMap::Vector(v) => v.len(),
        };
        if got != expected {
            return Err(Error::ModeMismatch {
                mode: l,
                expected,
                got,
            });
        }
    }
    let mut shape = a.shape.clone();
    let mut data = a.data.clone();
    // Work from the last mode so earlier mode positions stay valid.
    for l in (0..maps.len()).rev() {
        let outer: usize = shape[..l].iter().product();
        let inner: usize = shape[l + 1..].iter().product();
        let k = shape[l];
        match maps[l] {
            ModeMap::Identity => {}
            ModeMap::Vector(v) => {
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for (j, &vj) in v.iter().enumerate() {
                        if vj == 0.0 {
                            continue;
                        }
                        let src = &data[(o * k + j) * inner..(o * k + j + 1) * inner];
                        let dst = &mut out[o * inner..(o + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += vj * s;
                        }
                    }
                }
                data = out;
                shape.remove(l);
            }
            ModeMap::Matrix(b) => {
                let p = b.rows();
                checked_size(&[outer.max(1), p, inner.max(1)])?;
                let mut out = vec![0.0; outer * p * inner];
                for o in 0..outer {
                    for r in 0..p {
                        let dst = (o * p + r) * inner;
                        for j in 0..k {
                            let bij = b[(r, j)];
                            if bij == 0.0 {
                                continue;
                            }
                            let src = (o * k + j) * inner;
                            for i in 0..inner {
                                out[dst + i] += bij * data[src + i];
                            }
                        }
                    }
                }
                data = out;
                shape[l] = p;
            }
        }
    }
    DataTensor::new(shape, data)
}

/// Contracts every mode of `a` with the given vectors.
pub fn contract_all(a: &DataTensor, vs: &[Vec<f64>]) -> Result<f64> {
    let maps: Vec<ModeMap<'_>> = vs.iter().map(|v| ModeMap::Vector(v)).collect();
    Ok(multilinear_mul(a, &maps)?
        .as_scalar()
        .expect("all modes contracted"))
}

/// Contracts every mode except `skip`, returning a vector of length k_skip.
pub fn contract_except(a: &DataTensor, vs: &[Vec<f64>], skip: usize) -> Result<Vec<f64>> {
    let maps: Vec<ModeMap<'_>> = vs
        .iter()
        .enumerate()
        .map(|(l, v)| {
            if l == skip {
                ModeMap::Identity
            } else {
                ModeMap::Vector(v)
            }
        })
        .collect();
    Ok(multilinear_mul(a, &maps)?.data)
}

/// Data tensor of an L-layer diagonal network: x on the superdiagonal.
pub fn build_diag_tensor(x: &[f64], depth: usize) -> Result<DataTensor> {
    if x.is_empty() || depth < 2 {
        return Err(Error::Precondition(format!(
            "diagonal tensor needs d >= 1 and L >= 2, got d = {}, L = {depth}",
            x.len()
        )));
    }
    let d = x.len();
    let mut t = DataTensor::zeros(vec![d; depth])?;
    for (j, &xj) in x.iter().enumerate() {
        t.set(&vec![j; depth], xj);
    }
    Ok(t)
}

/// Data tensor of a convolutional network with filter sizes k1..kL (kL = d):
/// entry (j1, …, jL) is x[(j1 + … + jL) mod d] with 0-based indices.
pub fn build_conv_tensor(x: &[f64], filters: &[usize]) -> Result<DataTensor> {
    let d = x.len();
    check_conv(d, filters)?;
    let mut t = DataTensor::zeros(filters.to_vec())?;
    let mut idx = vec![0usize; filters.len()];
    for e in 0..t.data.len() {
        let s: usize = idx.iter().sum();
        t.data[e] = x[s % d];
        for m in (0..idx.len()).rev() {
            idx[m] += 1;
            if idx[m] < filters[m] {
                break;
            }
            idx[m] = 0;
        }
    }
    Ok(t)
}

fn check_conv(d: usize, filters: &[usize]) -> Result<()> {
    if d == 0 || filters.len() < 2 {
        return Err(Error::Precondition(format!(
            "convolutional network needs d >= 1 and L >= 2, got d = {d}, L = {}",
            filters.len()
        )));
    }
    if filters[filters.len() - 1] != d {
        return Err(Error::Precondition(format!(
            "last filter size must equal d = {d}, got {}",
            filters[filters.len() - 1]
        )));
    }
    if let Some((l, &k)) = filters.iter().enumerate().find(|(_, &k)| k == 0 || k > d) {
        return Err(Error::Precondition(format!(
            "filter {l} has size {k}, must lie in 1..={d}"
        )));
    }
    Ok(())
}

/// Data tensor of a fully-connected network with widths d1..dL (d1 = len x).
///
/// Built recursively: T1 = x, and Tl places T(l−1) block-diagonally so that
/// Tl[…, d(l−1)·j + a, j] = T(l−1)[…, a]. For L = 2 this is I_{d2} ⊗ x.
pub fn build_fc_tensor(x: &[f64], widths: &[usize]) -> Result<DataTensor> {
    check_fc(widths)?;
    if x.len() != widths[0] {
        return Err(Error::ModeMismatch {
            mode: 0,
            expected: widths[0],
            got: x.len(),
        });
    }
    checked_size(&fc_shape(widths))?;
    let mut t = DataTensor::new(vec![x.len()], x.to_vec())?;
    for l in 1..widths.len() {
        let prev = widths[l - 1];
        let w = widths[l];
        let lead: Vec<usize> = t.shape[..t.shape.len() - 1].to_vec();
        let outer: usize = lead.iter().product();
        let mut shape = lead;
        shape.push(prev * w);
        shape.push(w);
        let mut next = DataTensor::zeros(shape)?;
        for o in 0..outer {
            for j in 0..w {
                for a in 0..prev {
                    let src = t.data[o * prev + a];
                    next.data[(o * prev * w + prev * j + a) * w + j] = src;
                }
            }
        }
        t = next;
    }
    Ok(t)
}

fn check_fc(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::Precondition(format!(
            "fully-connected network needs L >= 2 positive widths, got {widths:?}"
        )));
    }
    Ok(())
}

fn fc_shape(widths: &[usize]) -> Vec<usize> {
    let mut s: Vec<usize> = widths.windows(2).map(|w| w[0] * w[1]).collect();
    s.push(widths[widths.len() - 1]);
    s
}

/// Architecture and dimension plan of a linear tensor network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    Diagonal {
        d: usize,
        depth: usize,
    },
    Convolutional {
        d: usize,
        filters: Vec<usize>,
    },
    FullyConnected {
        widths: Vec<usize>,
    },
    /// M(x) = Σ_j x_j·basis[j]; all basis tensors share one shape.
    Custom {
        basis: Vec<DataTensor>,
    },
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        match self {
            Architecture::Diagonal { d, depth } => {
                if *d == 0 || *depth < 2 {
                    return Err(Error::Precondition(format!(
                        "diagonal network needs d >= 1 and L >= 2, got d = {d}, L = {depth}"
                    )));
                }
                checked_size(&vec![*d; *depth]).map(|_| ())
            }
            Architecture::Convolutional { d, filters } => {
                check_conv(*d, filters)?;
                checked_size(filters).map(|_| ())
            }
            Architecture::FullyConnected { widths } => {
                check_fc(widths)?;
                checked_size(&fc_shape(widths)).map(|_| ())
            }
            Architecture::Custom { basis } => {
                let first = basis
                    .first()
                    .ok_or_else(|| Error::Precondition("custom basis is empty".into()))?;
                if first.order() < 2 {
                    return Err(Error::Precondition(
                        "custom data tensors need order >= 2".into(),
                    ));
                }
                if basis.iter().any(|b| b.shape != first.shape) {
                    return Err(Error::Shape("custom basis tensors differ in shape".into()));
                }
                Ok(())
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Diagonal { d, .. } | Architecture::Convolutional { d, .. } => *d,
            Architecture::FullyConnected { widths } => widths[0],
            Architecture::Custom { basis } => basis.len(),
        }
    }

    pub fn depth(&self) -> usize {
        self.shape().len()
    }

    /// Shape (k1, …, kL) of the data tensor, which is also the list of
    /// parameter vector lengths.
    pub fn shape(&self) -> Vec<usize> {
        match self {
            Architecture::Diagonal { d, depth } => vec![*d; *depth],
            Architecture::Convolutional { filters, .. } => filters.clone(),
            Architecture::FullyConnected { widths } => fc_shape(widths),
            Architecture::Custom { basis } => basis[0].shape.clone(),
        }
    }

    pub fn build(&self, x: &[f64]) -> Result<DataTensor> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has length {}, architecture expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        match self {
            Architecture::Diagonal { depth, .. } => build_diag_tensor(x, *depth),
            Architecture::Convolutional { filters, .. } => build_conv_tensor(x, filters),
            Architecture::FullyConnected { widths } => build_fc_tensor(x, widths),
            Architecture::Custom { basis } => {
                self.validate()?;
                let mut t = DataTensor::zeros(basis[0].shape.clone())?;
                for (b, &xj) in basis.iter().zip(x) {
                    t.axpy(xj, b)?;
                }
                Ok(t)
            }
        }
    }

    /// Checks that `params` has one vector of the right length per layer.
    pub fn check_params(&self, params: &[Vec<f64>]) -> Result<()> {
        let shape = self.shape();
        if params.len() != shape.len() {
            return Err(Error::Shape(format!(
                "architecture has {} layers, got {} parameter vectors",
                shape.len(),
                params.len()
            )));
        }
        for (l, (p, &k)) in params.iter().zip(&shape).enumerate() {
            if p.len() != k {
                return Err(Error::ModeMismatch {
                    mode: l,
                    expected: k,
                    got: p.len(),
                });
            }
        }
        Ok(())
    }
}

/// Architecture plus parameter vectors v1..vL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorNetwork {
    pub arch: Architecture,
    pub params: Vec<Vec<f64>>,
}

impl TensorNetwork {
    pub fn new(arch: Architecture, params: Vec<Vec<f64>>) -> Result<Self> {
        arch.validate()?;
        arch.check_params(&params)?;
        Ok(Self { arch, params })
    }

    /// Scaled initialization v_l = α·v̄_l.
    pub fn scaled(arch: Architecture, alpha: f64, directions: &[Vec<f64>]) -> Result<Self> {
        let params = directions
            .iter()
            .map(|v| v.iter().map(|a| alpha * a).collect())
            .collect();
        Self::new(arch, params)
    }

    pub fn depth(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        contract_all(&self.arch.build(x)?, &self.params)
    }

    /// β(Θ), obtained by evaluating the network on the standard basis.
    pub fn linear_coefficients(&self) -> Result<Vec<f64>> {
        let d = self.arch.input_dim();
        (0..d)
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                self.forward(&e)
            })
            .collect()
    }
}

/// Weight matrix W_l (d_l × d_{l+1}) of a fully-connected net, read from the
/// column-major vectorization v_l = vec(W_l). The last layer is a column.
pub fn fc_weight(widths: &[usize], params: &[Vec<f64>], l: usize) -> Result<Matrix> {
    let rows = widths[l];
    let cols = if l + 1 < widths.len() {
        widths[l + 1]
    } else {
        1
    };
    let v = &params[l];
    if v.len() != rows * cols {
        return Err(Error::ModeMismatch {
            mode: l,
            expected: rows * cols,
            got: v.len(),
        });
    }
    let mut w = Matrix::zeros(rows, cols);
    for b in 0..cols {
        for a in 0..rows {
            w[(a, b)] = v[a + rows * b];
        }
    }
    Ok(w)
}

/// Inverse of [`fc_weight`]: column-major vectorization.
pub fn fc_vec(w: &Matrix) -> Vec<f64> {
    let mut v = Vec::with_capacity(w.rows() * w.cols());
    for b in 0..w.cols() {
        for a in 0..w.rows() {
            v.push(w[(a, b)]);
        }
    }
    v
}

/// [a ⋆ b]_i = Σ_j a[(i + j) mod d]·b[j], for b no longer than a.
pub fn circular_conv(a: &[f64], b: &[f64]) -> Vec<f64> {
    let d = a.len();
    (0..d)
        .map(|i| {
            b.iter()
                .enumerate()
                .map(|(j, bj)| a[(i + j) % d] * bj)
                .sum()
        })
        .collect()
}

/// Evaluates the network layer by layer, without forming the data tensor.
pub fn direct_forward(arch: &Architecture, params: &[Vec<f64>], x: &[f64]) -> Result<f64> {
    arch.validate()?;
    arch.check_params(params)?;
    if x.len() != arch.input_dim() {
        return Err(Error::Shape(format!(
            "input has length {}, architecture expects {}",
            x.len(),
            arch.input_dim()
        )));
    }
    match arch {
        Architecture::Diagonal { .. } => Ok((0..x.len())
            .map(|j| x[j] * params.iter().map(|w| w[j]).product::<f64>())
            .sum()),
        Architecture::Convolutional { .. } => {
            let (last, filters) = params.split_last().expect("L >= 2");
            let mut h = x.to_vec();
            for w in filters {
                h = circular_conv(&h, w);
            }
            Ok(dot(&h, last))
        }
        Architecture::FullyConnected { widths } => {
            let mut h = x.to_vec();
            for l in 0..widths.len() {
                let w = fc_weight(widths, params, l)?;
                h = w.t_matvec(&h)?;
            }
            Ok(h[0])
        }
        Architecture::Custom { .. } => Err(Error::Precondition(
            "custom architectures have no layered form".into(),
        )),
    }
}

/// Per-mode residuals ‖s·u_l − A ∘ (u1, …, I, …, uL)‖ of a candidate singular
/// tuple. Every u_l must have unit norm.
pub fn singular_residual(a: &DataTensor, us: &[Vec<f64>], s: f64) -> Result<Vec<f64>> {
    if us.len() != a.order() {
        return Err(Error::Shape(format!(
            "tensor of order {} needs {} vectors, got {}",
            a.order(),
            a.order(),
            us.len()
        )));
    }
    for (l, u) in us.iter().enumerate() {
        let n = norm(u);
        if (n - 1.0).abs() > tol::UNIT_NORM_TOL {
            return Err(Error::Precondition(format!(
                "vector {l} has norm {n}, expected a unit vector"
            )));
        }
    }
    (0..us.len())
        .map(|l| {
            let g = contract_except(a, us, l)?;
            Ok(g.iter()
                .zip(&us[l])
                .map(|(gi, ui)| (s * ui - gi).powi(2))
                .sum::<f64>()
                .sqrt())
        })
        .collect()
}
