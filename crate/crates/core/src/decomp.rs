//! Orthogonal decompositions M(x) = Σ_j [Sx]_j · (U1[:, j] ⊗ … ⊗ UL[:, j]) for
//! diagonal and full-length convolutional networks, and even-vector utilities.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::Matrix;
use crate::tensor::{Architecture, DataTensor, TensorNetwork};
use crate::tol;

/// Complex scalar as an explicit (re, im) pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cplx {
    pub re: f64,
    pub im: f64,
}

impl Cplx {
    pub const ZERO: Cplx = Cplx { re: 0.0, im: 0.0 };
    pub const ONE: Cplx = Cplx { re: 1.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn real(re: f64) -> Self {
        Self { re, im: 0.0 }
    }

    /// e^{iθ}.
    pub fn expi(theta: f64) -> Self {
        Self {
            re: theta.cos(),
            im: theta.sin(),
        }
    }

    pub fn conj(self) -> Self {
        Self {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn arg(self) -> f64 {
        self.im.atan2(self.re)
    }

    pub fn scale(self, c: f64) -> Self {
        Self {
            re: self.re * c,
            im: self.im * c,
        }
    }
}

impl Add for Cplx {
    type Output = Cplx;
    fn add(self, o: Cplx) -> Cplx {
        Cplx::new(self.re + o.re, self.im + o.im)
    }
}

impl AddAssign for Cplx {
    fn add_assign(&mut self, o: Cplx) {
        self.re += o.re;
        self.im += o.im;
    }
}

impl Sub for Cplx {
    type Output = Cplx;
    fn sub(self, o: Cplx) -> Cplx {
        Cplx::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Cplx {
    type Output = Cplx;
    fn mul(self, o: Cplx) -> Cplx {
        Cplx::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

impl Neg for Cplx {
    type Output = Cplx;
    fn neg(self) -> Cplx {
        Cplx::new(-self.re, -self.im)
    }
}

/// Complex matrix stored as paired row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    pub re: Matrix,
    pub im: Matrix,
}

impl ComplexMatrix {
    pub fn new(re: Matrix, im: Matrix) -> Result<Self> {
        if re.rows() != im.rows() || re.cols() != im.cols() {
            return Err(Error::Shape(
                "real and imaginary parts differ in shape".into(),
            ));
        }
        Ok(Self { re, im })
    }

    pub fn from_real(re: Matrix) -> Self {
        let im = Matrix::zeros(re.rows(), re.cols());
        Self { re, im }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_real(Matrix::identity(n))
    }

    pub fn rows(&self) -> usize {
        self.re.rows()
    }

    pub fn cols(&self) -> usize {
        self.re.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> Cplx {
        Cplx::new(self.re[(i, j)], self.im[(i, j)])
    }

    pub fn set(&mut self, i: usize, j: usize, z: Cplx) {
        self.re[(i, j)] = z.re;
        self.im[(i, j)] = z.im;
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            re: self.re.scale(c),
            im: self.im.scale(c),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: self.im.scale(-1.0),
        }
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.im.max_abs() <= tol
    }

    pub fn matmul(&self, o: &ComplexMatrix) -> Result<ComplexMatrix> {
        let re = self.re.matmul(&o.re)?.sub(&self.im.matmul(&o.im)?)?;
        let im_a = self.re.matmul(&o.im)?;
        let im_b = self.im.matmul(&o.re)?;
        let mut im = im_a;
        for i in 0..im.rows() {
            for j in 0..im.cols() {
                im[(i, j)] += im_b[(i, j)];
            }
        }
        Ok(ComplexMatrix { re, im })
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self {
            re: self.re.transpose(),
            im: self.im.transpose().scale(-1.0),
        }
    }

    /// A·v for a real vector v.
    pub fn apply_real(&self, v: &[f64]) -> Result<Vec<Cplx>> {
        let re = self.re.matvec(v)?;
        let im = self.im.matvec(v)?;
        Ok(re
            .into_iter()
            .zip(im)
            .map(|(a, b)| Cplx::new(a, b))
            .collect())
    }

    /// Aᵀ·v (plain transpose, no conjugation) for a real vector v.
    pub fn t_apply_real(&self, v: &[f64]) -> Result<Vec<Cplx>> {
        let re = self.re.t_matvec(v)?;
        let im = self.im.t_matvec(v)?;
        Ok(re
            .into_iter()
            .zip(im)
            .map(|(a, b)| Cplx::new(a, b))
            .collect())
    }

    /// Aᵀ·z (plain transpose) for a complex vector z.
    pub fn t_apply(&self, z: &[Cplx]) -> Result<Vec<Cplx>> {
        if z.len() != self.rows() {
            return Err(Error::Shape(format!(
                "cannot apply transpose of {}x{} matrix to vector of length {}",
                self.rows(),
                self.cols(),
                z.len()
            )));
        }
        let mut out = vec![Cplx::ZERO; self.cols()];
        for i in 0..self.rows() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.get(i, j) * z[i];
            }
        }
        Ok(out)
    }

    /// max |(AᴴA − I)_{ij}|.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.adjoint().matmul(self).expect("square product");
        let mut e: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                e = e.max((g.re[(i, j)] - target).abs()).max(g.im[(i, j)].abs());
            }
        }
        e
    }
}

/// DFT matrix with entries exp(−2πi·j·k/d)/√d (0-based j, k).
pub fn dft_matrix(d: usize) -> ComplexMatrix {
    let mut f = ComplexMatrix::from_real(Matrix::zeros(d, d));
    let c = 1.0 / (d as f64).sqrt();
    for j in 0..d {
        for k in 0..d {
            // Reduce j*k mod d before scaling so large products keep full accuracy.
            let r = (j * k) % d;
            let theta = -2.0 * std::f64::consts::PI * r as f64 / d as f64;
            f.set(j, k, Cplx::expi(theta).scale(c));
        }
    }
    f
}

/// Decomposition (S, U1, …, UL) with m columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoDecomposition {
    /// m×d.
    pub s: ComplexMatrix,
    /// U_l is k_l×m.
    pub us: Vec<ComplexMatrix>,
}

impl OrthoDecomposition {
    pub fn new(s: ComplexMatrix, us: Vec<ComplexMatrix>) -> Result<Self> {
        let m = s.rows();
        if us.is_empty() {
            return Err(Error::Shape("decomposition needs at least one U".into()));
        }
        for (l, u) in us.iter().enumerate() {
            if u.cols() != m {
                return Err(Error::Shape(format!(
                    "U_{l} has {} columns, S has {m} rows",
                    u.cols()
                )));
            }
            let e = u.orthonormality_error();
            if e > tol::DECOMP_TOL {
                return Err(Error::Precondition(format!(
                    "U_{l} columns are not orthonormal (error {e:e})"
                )));
            }
        }
        Ok(Self { s, us })
    }

    pub fn m(&self) -> usize {
        self.s.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.s.cols()
    }

    pub fn is_real(&self) -> bool {
        self.s.is_real(0.0) && self.us.iter().all(|u| u.is_real(0.0))
    }

    /// η_l = U_lᵀ v_l for every layer.
    pub fn transform(&self, params: &[Vec<f64>]) -> Result<Vec<Vec<Cplx>>> {
        if params.len() != self.us.len() {
            return Err(Error::Shape(format!(
                "decomposition has {} layers, network has {}",
                self.us.len(),
                params.len()
            )));
        }
        params
            .iter()
            .zip(&self.us)
            .map(|(v, u)| u.t_apply_real(v))
            .collect()
    }

    /// ρ = η_1 ⊙ … ⊙ η_L.
    pub fn rho(&self, params: &[Vec<f64>]) -> Result<Vec<Cplx>> {
        let etas = self.transform(params)?;
        let mut rho = vec![Cplx::ONE; self.m()];
        for eta in &etas {
            for (r, e) in rho.iter_mut().zip(eta) {
                *r = *r * *e;
            }
        }
        Ok(rho)
    }

    /// β = Sᵀρ.
    pub fn beta_from_rho(&self, rho: &[Cplx]) -> Result<Vec<Cplx>> {
        self.s.t_apply(rho)
    }

    /// Σ_j [Sx]_j ⊗_l U_l[:, j], as separate real and imaginary tensors.
    pub fn reconstruct(&self, x: &[f64]) -> Result<(DataTensor, DataTensor)> {
        let sx = self.s.apply_real(x)?;
        let shape: Vec<usize> = self.us.iter().map(|u| u.rows()).collect();
        let mut re = DataTensor::zeros(shape.clone())?;
        let mut im = DataTensor::zeros(shape.clone())?;
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..re.len() {
            let mut acc = Cplx::ZERO;
            for (j, &c) in sx.iter().enumerate() {
                let mut p = c;
                for (l, u) in self.us.iter().enumerate() {
                    p = p * u.get(idx[l], j);
                }
                acc += p;
            }
            re.set(&idx, acc.re);
            im.set(&idx, acc.im);
            for m in (0..idx.len()).rev() {
                idx[m] += 1;
                if idx[m] < shape[m] {
                    break;
                }
                idx[m] = 0;
            }
        }
        Ok((re, im))
    }

    /// Decomposition for an architecture that admits one.
    pub fn for_architecture(arch: &Architecture) -> Result<Self> {
        match arch {
            Architecture::Diagonal { d, depth } => Ok(diag_decomposition(*d, *depth)),
            Architecture::Convolutional { d, filters } => {
                if filters.iter().any(|k| k != d) {
                    return Err(small_filter_error(*d, filters));
                }
                conv_decomposition(*d, filters.len())
            }
            Architecture::FullyConnected { .. } => Err(Error::Precondition(
                "fully-connected networks have no orthogonal decomposition of this form".into(),
            )),
            Architecture::Custom { .. } => Err(Error::Precondition(
                "custom architectures must supply their own decomposition".into(),
            )),
        }
    }
}

fn small_filter_error(d: usize, filters: &[usize]) -> Error {
    Error::Precondition(format!(
        "filters {filters:?} are shorter than d = {d}; use the single-point SVD \
         predictors instead of the DFT decomposition"
    ))
}

/// S = U_1 = … = U_L = I_d.
pub fn diag_decomposition(d: usize, depth: usize) -> OrthoDecomposition {
    OrthoDecomposition {
        s: ComplexMatrix::identity(d),
        us: vec![ComplexMatrix::identity(d); depth],
    }
}

/// Full-length convolution: S = d^{(L−1)/2}·F and U_l = F* for every layer.
pub fn conv_decomposition(d: usize, depth: usize) -> Result<OrthoDecomposition> {
    if d == 0 || depth < 2 {
        return Err(Error::Precondition(format!(
            "convolutional decomposition needs d >= 1 and L >= 2, got d = {d}, L = {depth}"
        )));
    }
    let f = dft_matrix(d);
    let scale = (d as f64).powf((depth as f64 - 1.0) / 2.0);
    Ok(OrthoDecomposition {
        s: f.scale(scale),
        us: vec![f.conj(); depth],
    })
}

/// Conv decomposition requested with explicit filter sizes; fails unless all
/// filters have full length.
pub fn conv_decomposition_for(d: usize, filters: &[usize]) -> Result<OrthoDecomposition> {
    if filters.iter().any(|&k| k != d) {
        return Err(small_filter_error(d, filters));
    }
    conv_decomposition(d, filters.len())
}

/// Result of comparing an architecture's data tensor with a decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    /// max |M(x) − Re(Σ_j …)| over samples and entries.
    pub max_error: f64,
    /// max |Im(Σ_j …)| over samples and entries.
    pub max_imag: f64,
}

impl Reconstruction {
    pub fn passes(&self) -> bool {
        self.max_error <= tol::DECOMP_TOL && self.max_imag <= tol::DECOMP_TOL
    }
}

pub fn verify_decomposition(
    arch: &Architecture,
    decomp: &OrthoDecomposition,
    xs: &[Vec<f64>],
) -> Result<Reconstruction> {
    if decomp.input_dim() != arch.input_dim() || decomp.us.len() != arch.depth() {
        return Err(Error::Shape(format!(
            "decomposition (d = {}, L = {}) does not match architecture (d = {}, L = {})",
            decomp.input_dim(),
            decomp.us.len(),
            arch.input_dim(),
            arch.depth()
        )));
    }
    let shape = arch.shape();
    for (l, u) in decomp.us.iter().enumerate() {
        if u.rows() != shape[l] {
            return Err(Error::ModeMismatch {
                mode: l,
                expected: shape[l],
                got: u.rows(),
            });
        }
    }
    let mut out = Reconstruction {
        max_error: 0.0,
        max_imag: 0.0,
    };
    for x in xs {
        let m = arch.build(x)?;
        let (re, im) = decomp.reconstruct(x)?;
        out.max_error = out.max_error.max(m.max_abs_diff(&re)?);
        out.max_imag = out
            .max_imag
            .max(im.data().iter().fold(0.0, |a, b| a.max(b.abs())));
    }
    Ok(out)
}

/// Mirror pairs (k, d − k) for 0 < k < d − k, the constraints of evenness.
fn mirror_pairs(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..d).filter(move |&k| k < d - k).map(move |k| (k, d - k))
}

/// True if x[k] = x[d − k] for all 0 < k < d (0-based, spacing tolerance `tol`).
pub fn is_even(x: &[f64], tol: f64) -> bool {
    mirror_pairs(x.len()).all(|(a, b)| (x[a] - x[b]).abs() <= tol)
}

/// Averages every mirror pair.
pub fn project_even(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for (a, b) in mirror_pairs(x.len()) {
        let m = 0.5 * (x[a] + x[b]);
        y[a] = m;
        y[b] = m;
    }
    y
}

/// Outcome of checking that Fx is real and even.
#[derive(Debug, Clone, PartialEq)]
pub struct EvenDftCheck {
    pub max_imag: f64,
    pub real_part: Vec<f64>,
    pub real_part_even: bool,
}

impl EvenDftCheck {
    pub fn holds(&self) -> bool {
        self.max_imag <= tol::DECOMP_TOL && self.real_part_even
    }
}

pub fn dft_of_even_is_real_even(x: &[f64]) -> EvenDftCheck {
    let fx = dft_matrix(x.len())
        .apply_real(x)
        .expect("square DFT matches input");
    let real_part: Vec<f64> = fx.iter().map(|z| z.re).collect();
    EvenDftCheck {
        max_imag: fx.iter().fold(0.0, |m, z| m.max(z.im.abs())),
        real_part_even: is_even(&real_part, tol::DECOMP_TOL),
        real_part,
    }
}

/// Network parameters expressed in the decomposition's coordinates.
pub fn rho_of(net: &TensorNetwork, decomp: &OrthoDecomposition) -> Result<Vec<Cplx>> {
    decomp.rho(&net.params)
}
