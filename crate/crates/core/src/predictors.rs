//! Predicted limits of gradient flow, each with a certificate of residuals
//! recomputed from the returned value.
//!
//! Regression limits are points β∞; classification limits are unit directions.
//! The small linear and quadratic programs are solved exactly by enumerating
//! supports or active sets, which is affordable for a dozen variables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};
use crate::decomp::{ComplexMatrix, Cplx, OrthoDecomposition};
use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::scalar_ode;
use crate::solvers::{
    bracket_and_solve, dot, for_each_subset, norm, normalize, solve, solve_spd, svd, sym_eig,
    Matrix, Svd,
};
use crate::tensor::{singular_residual, Architecture, TensorNetwork};
use crate::tol;

/// Provenance tags naming the characterization behind a prediction.
pub mod tag {
    pub const MIN_L2_INTERPOLANT: &str = "min_l2_interpolant";
    pub const MIN_L1_TRANSFORMED: &str = "min_l1_transformed";
    pub const Q_MINIMIZER: &str = "q_minimizer";
    pub const TWO_LAYER_REGRESSION: &str = "two_layer_single_point_regression";
    pub const TWO_LAYER_MARGIN: &str = "two_layer_single_point_margin";
    pub const SMALL_FILTER_CONV: &str = "small_filter_conv_direction";
    pub const L2_MAX_MARGIN: &str = "l2_max_margin";
    pub const L1_MAX_MARGIN_TRANSFORMED: &str = "l1_max_margin_transformed";
    pub const COMMUTING_SENSING: &str = "commuting_sensing";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// A limit point β∞.
    Point,
    /// A unit limit direction of β.
    Direction,
}

/// A predicted limit with named, nonnegative residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub kind: Kind,
    pub theorem: String,
    pub value: Vec<f64>,
    pub certificate: BTreeMap<String, f64>,
}

impl Prediction {
    fn point(theorem: &str, value: Vec<f64>) -> Self {
        Self {
            kind: Kind::Point,
            theorem: theorem.to_string(),
            value,
            certificate: BTreeMap::new(),
        }
    }

    fn direction(theorem: &str, value: &[f64]) -> Result<Self> {
        let value = normalize(value)
            .ok_or_else(|| Error::Precondition("predicted direction is zero".into()))?;
        Ok(Self {
            kind: Kind::Direction,
            theorem: theorem.to_string(),
            value,
            certificate: BTreeMap::new(),
        })
    }

    fn cert(mut self, name: &str, v: f64) -> Self {
        self.certificate.insert(name.to_string(), v);
        self
    }
}

fn check_xy(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!(
            "X has {} rows but y has {} entries",
            x.rows(),
            y.len()
        )));
    }
    Ok(())
}

fn residual_norm(a: &Matrix, z: &[f64], y: &[f64]) -> Result<f64> {
    let az = a.matvec(z)?;
    Ok(az
        .iter()
        .zip(y)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt())
}

/// z = Xᵀ(XXᵀ)⁻¹y, the interpolant of minimum ℓ2 norm.
pub fn min_l2_interpolant(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    check_xy(x, y)?;
    let s = svd(x).s;
    let n = x.rows();
    if s.len() < n || s[n - 1] <= tol::DATA_RANK_RTOL * s[0] {
        return Err(Error::Singular("X does not have full row rank".into()));
    }
    let g = x.matmul(&x.transpose())?;
    let c = solve_spd(&g, y)?;
    x.t_matvec(&c)
}

/// Minimizes Σ_j |ρ_j|/w_j subject to Aρ = y by enumerating supports of size
/// at most n. Weights default to 1.
pub fn min_l1_interpolant_a(a: &Matrix, y: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    check_xy(a, y)?;
    let (n, m) = (a.rows(), a.cols());
    let w: Vec<f64> = weights.map_or_else(|| vec![1.0; m], |w| w.to_vec());
    if w.len() != m || w.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Precondition(
            "weights must be positive, one per column".into(),
        ));
    }
    let ytol = tol::ENUM_FEAS_TOL * (1.0 + norm(y));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..=n.min(m) {
        for_each_subset(m, k, |supp| {
            let rho = match restricted_solve(a, supp, y) {
                Some(r) => r,
                None => return,
            };
            let mut full = vec![0.0; m];
            for (&j, &r) in supp.iter().zip(&rho) {
                full[j] = r;
            }
            match residual_norm(a, &full, y) {
                Ok(res) if res <= ytol => {}
                _ => return,
            }
            let cost: f64 = full.iter().zip(&w).map(|(r, wj)| r.abs() / wj).sum();
            if best
                .as_ref()
                .map_or(true, |(c, _)| cost < *c - 1e-12 * (1.0 + c.abs()))
            {
                best = Some((cost, full));
            }
        });
    }
    best.map(|(_, r)| r)
        .ok_or_else(|| Error::Infeasible("no support solves Aρ = y".into()))
}

/// Least-squares solution on the columns in `supp`; None if they are dependent.
fn restricted_solve(a: &Matrix, supp: &[usize], y: &[f64]) -> Option<Vec<f64>> {
    if supp.is_empty() {
        return Some(Vec::new());
    }
    let sub = a.select_cols(supp);
    let g = sub.transpose().matmul(&sub).ok()?;
    let rhs = sub.t_matvec(y).ok()?;
    solve_spd(&g, &rhs).ok()
}

/// min Σ_j |ρ_j|/w_j subject to X Sᵀρ = y for a real transform S (m×d).
pub fn min_l1_interpolant(
    s: &Matrix,
    x: &Matrix,
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let a = x.matmul(&s.transpose())?;
    min_l1_interpolant_a(&a, y, weights)
}

/// min Σ_j ρ_j²/w_j subject to Aρ = y: ρ = W Aᵀ (A W Aᵀ)⁻¹ y.
pub fn weighted_min_l2(a: &Matrix, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_xy(a, y)?;
    if w.len() != a.cols() || w.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Precondition(
            "weights must be positive, one per column".into(),
        ));
    }
    let mut aw = a.clone();
    for i in 0..aw.rows() {
        for j in 0..aw.cols() {
            aw[(i, j)] *= w[j];
        }
    }
    let g = aw.matmul(&a.transpose())?;
    let c = solve_spd(&g, y)?;
    aw.t_matvec(&c)
}

/// Result of the Q-minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct QSolution {
    pub rho: Vec<f64>,
    pub beta: Vec<f64>,
    /// Dual variable ν with ρ_j = a_j h(b_j [S Xᵀ ν]_j).
    pub nu: Vec<f64>,
    pub newton_steps: usize,
    /// ‖X Sᵀρ − y‖.
    pub feasibility: f64,
    /// ‖∇Q(ρ) − S Xᵀλ‖/‖∇Q(ρ)‖ for the best-fitting λ.
    pub kkt_residual: f64,
}

/// Solves min Q_{L,α,η̄}(ρ) subject to X Sᵀρ = y.
///
/// The optimality conditions read ρ_j = a_j h_L(b_j ξ_j) with ξ = S Xᵀν,
/// a_j = α^L|η̄_j|^L and b_j = α^{L−2}|η̄_j|^{L−2}. They are the stationarity
/// conditions of the convex dual Φ(ν) = Σ_j (a_j/b_j) G_L(b_j ξ_j) − yᵀν with
/// G_L = ∫ h_L, which is minimized by damped Newton steps.
pub fn q_minimizer(
    depth: usize,
    alpha: f64,
    eta_bar: &[f64],
    s: &Matrix,
    x: &Matrix,
    y: &[f64],
) -> Result<QSolution> {
    check_xy(x, y)?;
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if s.rows() != eta_bar.len() || s.cols() != x.cols() {
        return Err(Error::Shape(format!(
            "S is {}x{}, expected {}x{}",
            s.rows(),
            s.cols(),
            eta_bar.len(),
            x.cols()
        )));
    }
    if let Some(j) = eta_bar.iter().position(|&e| e == 0.0 || !e.is_finite()) {
        return Err(Error::Precondition(format!("eta_bar[{j}] must be nonzero")));
    }
    let a_mat = x.matmul(&s.transpose())?; // n×m
    let n = a_mat.rows();
    let m = a_mat.cols();
    let l = depth as i32;
    let aw: Vec<f64> = eta_bar.iter().map(|e| (alpha * e.abs()).powi(l)).collect();
    let bw: Vec<f64> = eta_bar
        .iter()
        .map(|e| (alpha * e.abs()).powi(l - 2))
        .collect();

    let phi = |nu: &[f64]| -> Option<f64> {
        let xi = a_mat.t_matvec(nu).ok()?;
        let mut v = -dot(y, nu);
        for j in 0..m {
            let g = scalar_ode::h_integral(depth, bw[j] * xi[j]).ok()?;
            v += aw[j] / bw[j] * g;
        }
        v.is_finite().then_some(v)
    };
    let rho_of = |nu: &[f64]| -> Result<Vec<f64>> {
        let xi = a_mat.t_matvec(nu)?;
        (0..m)
            .map(|j| Ok(aw[j] * scalar_ode::h(depth, bw[j] * xi[j])?))
            .collect()
    };

    let grad_of = |nu: &[f64]| -> Result<Vec<f64>> {
        let fit = a_mat.matvec(&rho_of(nu)?)?;
        Ok(fit.iter().zip(y).map(|(p, q)| p - q).collect())
    };

    let mut nu = vec![0.0; n];
    let mut f = phi(&nu).expect("dual is finite at zero");
    let mut grad = grad_of(&nu)?;
    let ytol = tol::NEWTON_GRAD_TOL * (1.0 + norm(y));
    let a_norm = a_mat.frobenius();
    let mut steps = 0;
    while norm(&grad) > ytol {
        if steps >= tol::NEWTON_MAX_STEPS {
            return Err(Error::NoConvergence {
                iterations: steps,
                detail: format!(
                    "damped Newton for the Q dual stalled at nu = {nu:?}, gradient norm {:e}",
                    norm(&grad)
                ),
            });
        }
        let xi = a_mat.t_matvec(&nu)?;
        let mut hess = Matrix::zeros(n, n);
        for j in 0..m {
            let c = aw[j] * bw[j] * scalar_ode::h_prime(depth, bw[j] * xi[j])?;
            for p in 0..n {
                for q in 0..n {
                    hess[(p, q)] += c * a_mat[(p, j)] * a_mat[(q, j)];
                }
            }
        }
        let dir = solve_spd(&hess, &grad)?;
        let decrement = dot(&grad, &dir);
        let gnorm = norm(&grad);
        // Near the optimum Φ stops resolving the decrease, so a smaller
        // residual also counts as progress.
        let mut t = 1.0;
        let mut moved = false;
        let mut stalled = false;
        for _ in 0..60 {
            let trial: Vec<f64> = nu.iter().zip(&dir).map(|(a, b)| a - t * b).collect();
            if trial == nu {
                break;
            }
            if let Some(ft) = phi(&trial) {
                if let Ok(gt) = grad_of(&trial) {
                    if ft <= f - 1e-4 * t * decrement || norm(&gt) < 0.5 * gnorm {
                        stalled = norm(&gt) > 0.5 * gnorm;
                        nu = trial;
                        f = ft;
                        grad = gt;
                        moved = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        steps += 1;
        // Backward-error floor: on ill-conditioned data the residual cannot
        // drop much below eps·‖A‖·‖ρ‖.
        let floor = tol::Q_FEAS_TOL * (1.0 + norm(y) + a_norm * norm(&rho_of(&nu)?));
        if moved && stalled && norm(&grad) <= floor {
            break;
        }
        if !moved {
            if gnorm <= floor {
                break;
            }
            return Err(Error::NoConvergence {
                iterations: steps,
                detail: format!(
                    "line search failed for the Q dual at nu = {nu:?}, gradient norm {gnorm:e}"
                ),
            });
        }
    }
    let rho = rho_of(&nu)?;
    let beta = s.t_matvec(&rho)?;
    let feasibility = residual_norm(&a_mat, &rho, y)?;
    let grad_q: Vec<f64> = (0..m)
        .map(|j| Ok(scalar_ode::h_inv(depth, rho[j] / aw[j])? / bw[j]))
        .collect::<Result<_>>()?;
    let kkt_residual = range_residual(&a_mat, &grad_q)?;
    Ok(QSolution {
        rho,
        beta,
        nu,
        newton_steps: steps,
        feasibility,
        kkt_residual,
    })
}

/// Relative distance of g from the row space of A: min_λ ‖g − Aᵀλ‖ / ‖g‖.
fn range_residual(a: &Matrix, g: &[f64]) -> Result<f64> {
    let gn = norm(g);
    if gn == 0.0 {
        return Ok(0.0);
    }
    let gram = a.matmul(&a.transpose())?;
    let lam = solve_spd(&gram, &a.matvec(g)?)?;
    let fit = a.t_matvec(&lam)?;
    Ok(norm(&g.iter().zip(&fit).map(|(p, q)| p - q).collect::<Vec<_>>()) / gn)
}

/// Limits (v1∞, v2∞) of a two-layer network trained on one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerLimit {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub nu: f64,
    /// Smallest initialization gap [U1ᵀv̄1]_j² − [U2ᵀv̄2]_j², block-averaged
    /// over tied singular values.
    pub lambda: f64,
}

/// Groups of indices whose singular values agree to `TIE_RTOL`.
fn tie_blocks(s: &[f64]) -> Vec<Vec<usize>> {
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for j in 0..s.len() {
        match blocks.last_mut() {
            Some(b) if (s[b[0]] - s[j]).abs() <= tol::TIE_RTOL * s[0].abs().max(1e-300) => {
                b.push(j)
            }
            _ => blocks.push(vec![j]),
        }
    }
    blocks
}

/// Closed-form limit of a two-layer network on one data point with compact
/// SVD M(x) = U1 diag(s) U2ᵀ, initialized at (αv̄1, αv̄2).
///
/// With a = U1ᵀv̄1, b = U2ᵀv̄2 and ν = g⁻¹(y/α²),
/// v1∞ = αU1(a⊙cosh(νs) + b⊙sinh(νs)) + α(I − U1U1ᵀ)v̄1 and symmetrically
/// for v2∞. The closed form (and g) is invariant under rotations inside a
/// block of equal singular values, so the initialization condition
/// a_j² − b_j² > 0 is checked in the best basis of each block, where its
/// smallest value is (‖a_B‖² − ‖b_B‖²)/|B|.
pub fn two_layer_regression_limit(
    u1: &Matrix,
    u2: &Matrix,
    s: &[f64],
    v1bar: &[f64],
    v2bar: &[f64],
    alpha: f64,
    y: f64,
) -> Result<TwoLayerLimit> {
    let m = s.len();
    if u1.cols() != m || u2.cols() != m || u1.rows() != v1bar.len() || u2.rows() != v2bar.len() {
        return Err(Error::Shape(
            "SVD factors and initial directions disagree".into(),
        ));
    }
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let a = u1.t_matvec(v1bar)?;
    let b = u2.t_matvec(v2bar)?;
    let lambda = tie_blocks(s)
        .iter()
        .map(|blk| {
            let gap: f64 = blk.iter().map(|&j| a[j] * a[j] - b[j] * b[j]).sum();
            if blk.len() == 1 {
                gap
            } else {
                gap / blk.len() as f64
            }
        })
        .fold(f64::INFINITY, f64::min);
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!(
            "initialization violates [U1ᵀv̄1]_j² − [U2ᵀv̄2]_j² > 0 (smallest gap {lambda:e})"
        )));
    }
    let g = |nu: f64| -> f64 {
        (0..m)
            .map(|j| {
                s[j] * (0.5 * (a[j] * a[j] + b[j] * b[j]) * (2.0 * s[j] * nu).sinh()
                    + a[j] * b[j] * (2.0 * s[j] * nu).cosh())
            })
            .sum()
    };
    let nu = bracket_and_solve(g, y / (alpha * alpha))?;
    let v1 = assemble(u1, &a, &b, s, nu, v1bar, alpha, false)?;
    let v2 = assemble(u2, &a, &b, s, nu, v2bar, alpha, true)?;
    Ok(TwoLayerLimit { v1, v2, nu, lambda })
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    u: &Matrix,
    a: &[f64],
    b: &[f64],
    s: &[f64],
    nu: f64,
    vbar: &[f64],
    alpha: f64,
    second: bool,
) -> Result<Vec<f64>> {
    let coef: Vec<f64> = (0..s.len())
        .map(|j| {
            let (c, sh) = ((nu * s[j]).cosh(), (nu * s[j]).sinh());
            if second {
                a[j] * sh + b[j] * c
            } else {
                a[j] * c + b[j] * sh
            }
        })
        .collect();
    let inside = u.matvec(&coef)?;
    let proj = u.matvec(&u.t_matvec(vbar)?)?;
    Ok((0..vbar.len())
        .map(|i| alpha * (inside[i] + vbar[i] - proj[i]))
        .collect())
}

/// SVD of the order-2 data tensor M(x).
pub fn data_svd(arch: &Architecture, x: &[f64]) -> Result<Svd> {
    let m = arch.build(x)?;
    let mat = m.to_matrix().ok_or_else(|| {
        Error::Precondition(format!(
            "single-point predictors need a two-layer network, got {} layers",
            m.order()
        ))
    })?;
    Ok(svd(&mat))
}

/// Two-layer single-point regression limit for an architecture, with β∞ and
/// the certificate |f(x; v∞) − y|.
pub fn predict_two_layer_regression(
    arch: &Architecture,
    x: &[f64],
    y: f64,
    v1bar: &[f64],
    v2bar: &[f64],
    alpha: f64,
) -> Result<(Prediction, TwoLayerLimit)> {
    let sv = data_svd(arch, x)?;
    let lim = two_layer_regression_limit(&sv.u, &sv.v, &sv.s, v1bar, v2bar, alpha, y)?;
    let net = TensorNetwork::new(arch.clone(), vec![lim.v1.clone(), lim.v2.clone()])?;
    let fit = (net.forward(x)? - y).abs();
    let beta = net.linear_coefficients()?;
    let fit_beta = (dot(&beta, x) - y).abs();
    let p = Prediction::point(tag::TWO_LAYER_REGRESSION, beta)
        .cert("interpolation_residual", fit)
        .cert("linear_coefficient_residual", fit_beta)
        .cert("init_gap_lambda", lim.lambda);
    Ok((p, lim))
}

/// Limit direction of a two-layer classifier on one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginDirection {
    pub rho: Vec<f64>,
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
    /// Index carrying all the mass.
    pub top: usize,
    /// Another singular value ties with the top one.
    pub tie: bool,
}

/// ρ∞ = (y/s_{j*}) e_{j*} on the largest singular value, with
/// |η1| = |η2| = |ρ|^{1/2} and sign(η1) = sign(y)·sign(η2).
pub fn two_layer_margin_direction(s: &[f64], y: f64) -> Result<MarginDirection> {
    if s.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Precondition(
            "singular values must be nonnegative".into(),
        ));
    }
    if y != 1.0 && y != -1.0 {
        return Err(Error::Precondition(format!("label must be ±1, got {y}")));
    }
    let smax = s.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Err(Error::Infeasible(
            "all singular values vanish; the point cannot be separated".into(),
        ));
    }
    let top = s.iter().position(|&v| v == smax).unwrap();
    let tie = s
        .iter()
        .enumerate()
        .any(|(j, &v)| j != top && (smax - v) <= tol::TIE_RTOL * smax);
    let m = s.len();
    let mut rho = vec![0.0; m];
    rho[top] = y / smax;
    let mag = rho[top].abs().sqrt();
    let mut eta1 = vec![0.0; m];
    let mut eta2 = vec![0.0; m];
    eta1[top] = y * mag;
    eta2[top] = mag;
    Ok(MarginDirection {
        rho,
        eta1,
        eta2,
        top,
        tie,
    })
}

/// Direction of β for a two-layer classifier trained on one point, via the
/// top singular vectors of M(x).
pub fn predict_two_layer_classification(
    arch: &Architecture,
    x: &[f64],
    y: f64,
) -> Result<(Prediction, MarginDirection)> {
    let sv = data_svd(arch, x)?;
    let md = two_layer_margin_direction(&sv.s, y)?;
    let v1 = sv.u.matvec(&md.eta1)?;
    let v2 = sv.v.matvec(&md.eta2)?;
    let net = TensorNetwork::new(arch.clone(), vec![v1, v2])?;
    let beta = net.linear_coefficients()?;
    let margin = y * dot(&beta, x);
    let p = Prediction::direction(tag::TWO_LAYER_MARGIN, &beta)?
        .cert("margin_violation", (1.0 - margin).abs())
        .cert("top_singular_tie", if md.tie { 1.0 } else { 0.0 });
    Ok((p, md))
}

/// Limit direction of β for a two-layer convolutional classifier on one point
/// with first filter size 1 or 2: y·x for k1 = 1, and 2yx ± y(x⃖ + x⃗) for
/// k1 = 2 with the sign of the autocorrelation xᵀx⃖.
pub fn conv_small_filter_direction(x: &[f64], y: f64, k1: usize) -> Result<Prediction> {
    let d = x.len();
    if d == 0 {
        return Err(Error::Precondition("empty data point".into()));
    }
    match k1 {
        1 => Ok(Prediction::direction(
            tag::SMALL_FILTER_CONV,
            &x.iter().map(|v| y * v).collect::<Vec<_>>(),
        )?),
        2 => {
            let left: Vec<f64> = (0..d).map(|i| x[(i + 1) % d]).collect();
            let right: Vec<f64> = (0..d).map(|i| x[(i + d - 1) % d]).collect();
            let auto = dot(x, &left);
            if auto.abs() <= 1e-12 * dot(x, x) {
                return Err(Error::Precondition(
                    "tie between singular values, direction undetermined".into(),
                ));
            }
            let sg = auto.signum();
            let v: Vec<f64> = (0..d)
                .map(|i| y * (2.0 * x[i] + sg * (left[i] + right[i])))
                .collect();
            Ok(Prediction::direction(tag::SMALL_FILTER_CONV, &v)?
                .cert(
                    "autocorrelation_positive",
                    if auto > 0.0 { 1.0 } else { 0.0 },
                )
                .cert("autocorrelation_magnitude", auto.abs()))
        }
        _ => Err(Error::Precondition(format!(
            "first filter size must be 1 or 2, got {k1}"
        ))),
    }
}

/// Solution of the ℓ2 hard-margin problem min ‖z‖² s.t. y_i x_iᵀz ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct HardMargin {
    pub z: Vec<f64>,
    pub direction: Vec<f64>,
    /// γ = 1/‖z‖.
    pub margin: f64,
    /// Dual multipliers μ ≥ 0, one per point.
    pub mu: Vec<f64>,
    pub support: Vec<usize>,
}

/// ℓ2 hard margin by enumerating active sets of size ≤ d+1.
pub fn maxmargin_l2(x: &Matrix, y: &[f64]) -> Result<HardMargin> {
    check_xy(x, y)?;
    let (n, d) = (x.rows(), x.cols());
    let yx: Vec<Vec<f64>> = (0..n)
        .map(|i| x.row(i).iter().map(|v| y[i] * v).collect())
        .collect();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<usize>)> = None;
    for k in 1..=n.min(d + 1) {
        for_each_subset(n, k, |act| {
            let mut g = Matrix::zeros(k, k);
            for (p, &i) in act.iter().enumerate() {
                for (q, &j) in act.iter().enumerate() {
                    g[(p, q)] = dot(&yx[i], &yx[j]);
                }
            }
            let mu_a = match solve_spd(&g, &vec![1.0; k]) {
                Ok(m) => m,
                Err(_) => return,
            };
            if mu_a.iter().any(|&m| m < -tol::ENUM_FEAS_TOL) {
                return;
            }
            let mut z = vec![0.0; d];
            for (&i, &m) in act.iter().zip(&mu_a) {
                for (zj, v) in z.iter_mut().zip(&yx[i]) {
                    *zj += m * v;
                }
            }
            if (0..n).any(|i| dot(&yx[i], &z) < 1.0 - tol::ENUM_FEAS_TOL) {
                return;
            }
            let nz = norm(&z);
            if best.as_ref().map_or(true, |(b, ..)| nz < *b - 1e-12 * b) {
                let mut mu = vec![0.0; n];
                for (&i, &m) in act.iter().zip(&mu_a) {
                    mu[i] = m.max(0.0);
                }
                best = Some((nz, z, mu, act.to_vec()));
            }
        });
    }
    let (nz, z, mu, support) = best.ok_or_else(|| {
        Error::Infeasible("data are not linearly separable through the origin".into())
    })?;
    Ok(HardMargin {
        direction: z.iter().map(|v| v / nz).collect(),
        z,
        margin: 1.0 / nz,
        mu,
        support,
    })
}

pub fn predict_l2_margin(x: &Matrix, y: &[f64]) -> Result<Prediction> {
    let hm = maxmargin_l2(x, y)?;
    let margins: Vec<f64> = (0..x.rows()).map(|i| y[i] * dot(x.row(i), &hm.z)).collect();
    let violation = margins
        .iter()
        .map(|g| (1.0 - g).max(0.0))
        .fold(0.0, f64::max);
    let stationarity = {
        let mut s = hm.z.clone();
        for i in 0..x.rows() {
            for (sj, v) in s.iter_mut().zip(x.row(i)) {
                *sj -= hm.mu[i] * y[i] * v;
            }
        }
        norm(&s) / norm(&hm.z)
    };
    let slack = (0..x.rows())
        .map(|i| hm.mu[i] * (margins[i] - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(Prediction::direction(tag::L2_MAX_MARGIN, &hm.z)?
        .cert("primal_violation", violation)
        .cert("stationarity_gap", stationarity)
        .cert("complementary_slackness", slack)
        .cert("margin", hm.margin))
}

/// min ‖ρ‖₁ s.t. y_i (Aρ)_i ≥ 1, solved by enumerating square vertex systems
/// (tight constraints I, support J, |I| = |J|).
pub fn maxmargin_l1(a: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    check_xy(a, y)?;
    let (n, m) = (a.rows(), a.cols());
    let ya = {
        let mut t = a.clone();
        for i in 0..n {
            for j in 0..m {
                t[(i, j)] *= y[i];
            }
        }
        t
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 1..=n.min(m) {
        for_each_subset(n, k, |rows| {
            for_each_subset(m, k, |cols| {
                let sub = ya.select_rows(rows).select_cols(cols);
                let r = match solve(&sub, &vec![1.0; k]) {
                    Ok(r) => r,
                    Err(_) => return,
                };
                let mut full = vec![0.0; m];
                for (&j, &v) in cols.iter().zip(&r) {
                    full[j] = v;
                }
                let ok = (0..n).all(|i| dot(ya.row(i), &full) >= 1.0 - tol::ENUM_FEAS_TOL);
                if !ok {
                    return;
                }
                let cost: f64 = full.iter().map(|v| v.abs()).sum();
                if best.as_ref().map_or(true, |(c, _)| cost < *c - 1e-12 * c) {
                    best = Some((cost, full));
                }
            });
        });
    }
    best.map(|(_, r)| r)
        .ok_or_else(|| Error::Infeasible("margin constraints are infeasible".into()))
}

/// KKT report for a candidate stationary point of
/// min ‖ρ‖_{2/L} s.t. y_i x_iᵀ Re(Sᵀρ) ≥ 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Positive factor applied to ρ so that the smallest margin is 1. Zero if
    /// no margin was positive and ρ was left as is.
    pub scale: f64,
    /// max_i (1 − y_i x_iᵀβ)₊ after rescaling.
    pub primal_violation: f64,
    /// max_i μ_i (margin_i − 1) relative to the subgradient norm.
    pub complementary_slackness: f64,
    /// Relative misfit of the subgradient by Σ μ_i y_i conj(S x_i).
    pub stationarity_gap: f64,
    pub mu: Vec<f64>,
}

impl KktReport {
    pub fn worst(&self) -> f64 {
        self.primal_violation
            .max(self.complementary_slackness)
            .max(self.stationarity_gap)
    }
}

/// Checks the KKT conditions of the ℓ_{2/L} margin problem in transformed
/// coordinates (ℓ1 for L = 2; `depth = 1` gives the ℓ2 problem).
///
/// With g = Σ_i μ_i y_i conj(S x_i) and p = 2/L, stationarity on the support
/// reads g_j = p|ρ_j|^{p−1}e^{i arg ρ_j}. For p < 2 it is checked in the form
/// conj(ρ_j) g_j = p|ρ_j|^p, which stays continuous as coordinates shrink to
/// zero; for p = 1 also |g_j| ≤ 1 everywhere, and for p = 2 simply g = 2ρ.
/// Multipliers μ ≥ 0 are fitted jointly to stationarity and complementary
/// slackness by exhaustive nonnegative least squares.
pub fn kkt_residual_maxmargin(
    rho: &[Cplx],
    s: &ComplexMatrix,
    x: &Matrix,
    y: &[f64],
    depth: usize,
) -> Result<KktReport> {
    check_xy(x, y)?;
    if depth == 0 {
        return Err(Error::Precondition("depth must be positive".into()));
    }
    let (n, m) = (x.rows(), s.rows());
    if rho.len() != m || s.cols() != x.cols() {
        return Err(Error::Shape("rho, S and X do not fit together".into()));
    }
    let p = 2.0 / depth as f64;
    let beta: Vec<f64> = s.t_apply(rho)?.iter().map(|z| z.re).collect();
    let margins: Vec<f64> = (0..n).map(|i| y[i] * dot(x.row(i), &beta)).collect();
    let gmin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    if !(gmin > 0.0) {
        let violation = margins
            .iter()
            .map(|g| (1.0 - g).max(0.0))
            .fold(0.0, f64::max);
        return Ok(KktReport {
            scale: 0.0,
            primal_violation: violation,
            complementary_slackness: 0.0,
            stationarity_gap: 1.0,
            mu: vec![0.0; n],
        });
    }
    let c = 1.0 / gmin;
    let rho: Vec<Cplx> = rho.iter().map(|z| z.scale(c)).collect();
    let margins: Vec<f64> = margins.iter().map(|g| g * c).collect();
    let primal_violation = margins
        .iter()
        .map(|g| (1.0 - g).max(0.0))
        .fold(0.0, f64::max);

    // Columns b_i = y_i conj(S x_i).
    let cols: Vec<Vec<Cplx>> = (0..n)
        .map(|i| {
            s.apply_real(x.row(i))
                .map(|sx| sx.into_iter().map(|z| z.conj().scale(y[i])).collect())
        })
        .collect::<Result<_>>()?;
    let quadratic = depth == 1;
    // Row j of the stationarity system: coef_ij μ_i = target_j.
    let weight = |j: usize| if quadratic { Cplx::ONE } else { rho[j].conj() };
    let target: Vec<Cplx> = rho
        .iter()
        .map(|z| {
            if quadratic {
                z.scale(2.0)
            } else {
                Cplx::real(p * z.abs().powf(p))
            }
        })
        .collect();
    let tnorm = target
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let coef: Vec<Vec<Cplx>> = cols
        .iter()
        .map(|c| (0..m).map(|j| weight(j) * c[j]).collect())
        .collect();
    let cnorm: Vec<f64> = coef
        .iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    // Stationarity (re, im) rows, then one complementary-slackness row per
    // multiplier.
    let mut a = Matrix::zeros(2 * m + n, n);
    let mut b = vec![0.0; 2 * m + n];
    for j in 0..m {
        for i in 0..n {
            a[(2 * j, i)] = coef[i][j].re;
            a[(2 * j + 1, i)] = coef[i][j].im;
        }
        b[2 * j] = target[j].re;
        b[2 * j + 1] = target[j].im;
    }
    for i in 0..n {
        a[(2 * m + i, i)] = (margins[i] - 1.0) * cnorm[i];
    }
    let mu = nnls_enumerate(&a, &b)?;
    let mut misfit = 0.0;
    for j in 0..m {
        let mut fit = Cplx::ZERO;
        for i in 0..n {
            fit += coef[i][j].scale(mu[i]);
        }
        misfit += (fit - target[j]).norm_sqr();
    }
    let mut gap = misfit.sqrt() / tnorm;
    if depth == 2 {
        for j in 0..m {
            let mut g = Cplx::ZERO;
            for i in 0..n {
                g += cols[i][j].scale(mu[i]);
            }
            gap = gap.max(g.abs() - 1.0);
        }
    }
    let cs = (0..n)
        .map(|i| mu[i] * (margins[i] - 1.0).abs() * cnorm[i] / tnorm)
        .fold(0.0, f64::max);
    Ok(KktReport {
        scale: c,
        primal_violation,
        complementary_slackness: cs,
        stationarity_gap: gap,
        mu,
    })
}

/// min_{μ ≥ 0} ‖Aμ − b‖ by trying every subset of free variables.
fn nnls_enumerate(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.cols();
    if n > 16 {
        return Err(Error::Precondition(format!(
            "exhaustive NNLS supports at most 16 variables, got {n}"
        )));
    }
    let mut best = (norm(b), vec![0.0; n]);
    for k in 1..=n {
        for_each_subset(n, k, |free| {
            let sub = a.select_cols(free);
            let g = match sub.transpose().matmul(&sub) {
                Ok(g) => g,
                Err(_) => return,
            };
            let rhs = sub.t_matvec(b).expect("shapes agree");
            let sol = match solve_spd(&g, &rhs) {
                Ok(s) => s,
                Err(_) => return,
            };
            if sol.iter().any(|&v| v < 0.0) {
                return;
            }
            let mut full = vec![0.0; n];
            for (&i, &v) in free.iter().zip(&sol) {
                full[i] = v;
            }
            let r = residual_norm(a, &full, b).expect("shapes agree");
            if r < best.0 {
                best = (r, full);
            }
        });
    }
    Ok(best.1)
}

/// Requires S Xᵀ to be real and returns the real matrix X Sᵀ. Complex
/// transforms are reduced to their real part when every S x_i is real; the
/// imaginary part then plays no role in the constraints.
pub fn real_transform(decomp: &OrthoDecomposition, x: &Matrix) -> Result<(Matrix, Matrix)> {
    let mut a = Matrix::zeros(x.rows(), decomp.m());
    for i in 0..x.rows() {
        let sx = decomp.s.apply_real(x.row(i))?;
        let scale = sx.iter().map(|z| z.abs()).fold(1.0, f64::max);
        for (j, z) in sx.iter().enumerate() {
            if z.im.abs() > tol::DECOMP_TOL * scale {
                return Err(Error::Precondition(
                    "S x_i is complex for some data point; the transformed problem is not \
                     real (full-length convolution needs even data here)"
                        .into(),
                ));
            }
            a[(i, j)] = z.re;
        }
    }
    Ok((a, decomp.s.re.clone()))
}

/// Small-initialization regression limit β = Sᵀρ with ρ the minimum-ℓ1
/// interpolant in transformed coordinates.
pub fn predict_min_l1_transformed(
    decomp: &OrthoDecomposition,
    x: &Matrix,
    y: &[f64],
) -> Result<Prediction> {
    let (a, s_re) = real_transform(decomp, x)?;
    let rho = min_l1_interpolant_a(&a, y, None)?;
    let beta = s_re.t_matvec(&rho)?;
    let fit = residual_norm(x, &beta, y)?;
    Ok(Prediction::point(tag::MIN_L1_TRANSFORMED, beta)
        .cert("interpolation_residual", fit)
        .cert("l1_norm", rho.iter().map(|v| v.abs()).sum()))
}

pub fn predict_min_l2(x: &Matrix, y: &[f64]) -> Result<Prediction> {
    let z = min_l2_interpolant(x, y)?;
    let fit = residual_norm(x, &z, y)?;
    let orth = range_residual(x, &z)?;
    Ok(Prediction::point(tag::MIN_L2_INTERPOLANT, z)
        .cert("interpolation_residual", fit)
        .cert("row_space_residual", orth))
}

/// Regression limit β = Sᵀρ∞ from the Q-minimization for a decomposable
/// architecture initialized with v̄_l = U_l η̄ (l < L) and v̄_L = 0.
pub fn predict_q_minimizer(
    decomp: &OrthoDecomposition,
    depth: usize,
    alpha: f64,
    eta_bar: &[f64],
    x: &Matrix,
    y: &[f64],
) -> Result<(Prediction, QSolution)> {
    let (_, s_re) = real_transform(decomp, x)?;
    let sol = q_minimizer(depth, alpha, eta_bar, &s_re, x, y)?;
    let p = Prediction::point(tag::Q_MINIMIZER, sol.beta.clone())
        .cert("interpolation_residual", sol.feasibility)
        .cert("kkt_residual", sol.kkt_residual);
    Ok((p, sol))
}

/// Small-initialization margin direction Sᵀρ with ρ the ℓ1 max-margin
/// solution in transformed coordinates (two-layer decomposable networks).
pub fn predict_l1_margin_transformed(
    decomp: &OrthoDecomposition,
    x: &Matrix,
    y: &[f64],
) -> Result<Prediction> {
    let (a, s_re) = real_transform(decomp, x)?;
    let rho = maxmargin_l1(&a, y)?;
    let beta = s_re.t_matvec(&rho)?;
    let rc: Vec<Cplx> = rho.iter().map(|&v| Cplx::real(v)).collect();
    let s_real = ComplexMatrix::from_real(s_re);
    let kkt = kkt_residual_maxmargin(&rc, &s_real, x, y, 2)?;
    Ok(
        Prediction::direction(tag::L1_MAX_MARGIN_TRANSFORMED, &beta)?
            .cert("primal_violation", kkt.primal_violation)
            .cert("stationarity_gap", kkt.stationarity_gap)
            .cert("complementary_slackness", kkt.complementary_slackness),
    )
}

/// Limit of deep matrix sensing with commuting symmetric sensors A_i.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingLimit {
    pub m: Matrix,
    /// Common eigenbasis (columns).
    pub basis: Matrix,
    /// Row i holds the eigenvalues of A_i in that basis.
    pub eigenvalues: Matrix,
    pub rho: Vec<f64>,
    /// max_i |⟨A_i, M∞⟩ − y_i|.
    pub measurement_residual: f64,
}

fn inner(a: &Matrix, b: &Matrix) -> f64 {
    dot(a.data(), b.data())
}

/// Jointly diagonalizes the sensors, solves the diagonal-network Q problem on
/// the eigenvalues with η̄ = 1, S = I and maps the result back: M∞ = U diag(ρ) Uᵀ.
pub fn matrix_sensing_limit(
    sensors: &[Matrix],
    y: &[f64],
    alpha: f64,
    depth: usize,
) -> Result<SensingLimit> {
    if sensors.len() != y.len() || sensors.is_empty() {
        return Err(Error::Shape(format!(
            "{} sensors for {} measurements",
            sensors.len(),
            y.len()
        )));
    }
    let d = sensors[0].rows();
    for (i, a) in sensors.iter().enumerate() {
        if a.rows() != d || a.cols() != d {
            return Err(Error::Shape(format!("sensor {i} is not {d}x{d}")));
        }
        if a.sub(&a.transpose())?.max_abs() > 1e-12 * a.max_abs().max(1.0) {
            return Err(Error::Precondition(format!("sensor {i} is not symmetric")));
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..sensors.len() {
        for j in i + 1..sensors.len() {
            let c = sensors[i]
                .matmul(&sensors[j])?
                .sub(&sensors[j].matmul(&sensors[i])?)?;
            worst = worst.max(c.frobenius());
        }
    }
    if worst > tol::COMMUTE_TOL {
        return Err(Error::Precondition(format!(
            "sensors do not commute (largest commutator norm {worst:e})"
        )));
    }
    let basis = joint_eigenbasis(sensors)?;
    let n = sensors.len();
    let mut eig = Matrix::zeros(n, d);
    for (i, a) in sensors.iter().enumerate() {
        let t = basis.transpose().matmul(a)?.matmul(&basis)?;
        for j in 0..d {
            eig[(i, j)] = t[(j, j)];
        }
    }
    let sol = q_minimizer(depth, alpha, &vec![1.0; d], &Matrix::identity(d), &eig, y)?;
    let mut scaled = basis.clone();
    for i in 0..d {
        for j in 0..d {
            scaled[(i, j)] *= sol.rho[j];
        }
    }
    let m = scaled.matmul(&basis.transpose())?;
    let measurement_residual = sensors
        .iter()
        .zip(y)
        .map(|(a, yi)| (inner(a, &m) - yi).abs())
        .fold(0.0, f64::max);
    Ok(SensingLimit {
        m,
        basis,
        eigenvalues: eig,
        rho: sol.rho,
        measurement_residual,
    })
}

/// Eigenbasis of a fixed pseudo-random combination of the sensors, retried
/// with new weights until every sensor becomes diagonal.
fn joint_eigenbasis(sensors: &[Matrix]) -> Result<Matrix> {
    let d = sensors[0].rows();
    for attempt in 0..8u32 {
        let mut c = Matrix::zeros(d, d);
        for (i, a) in sensors.iter().enumerate() {
            // Fractional parts of multiples of the golden ratio.
            let w =
                0.5 + ((i as f64 + 1.0) * (attempt as f64 + 1.0) * 0.618_033_988_749_895).fract();
            c = Matrix::from_vec(
                d,
                d,
                c.data()
                    .iter()
                    .zip(a.data())
                    .map(|(p, q)| p + w * q)
                    .collect(),
            )?;
        }
        let (q, _) = sym_eig(&c)?;
        let ok = sensors.iter().all(|a| {
            let t = q.transpose().matmul(a).and_then(|m| m.matmul(&q));
            t.map_or(false, |t| {
                let mut off: f64 = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        if i != j {
                            off = off.max(t[(i, j)].abs());
                        }
                    }
                }
                off <= tol::JOINT_DIAG_TOL * a.max_abs().max(1.0)
            })
        });
        if ok {
            return Ok(q);
        }
    }
    Err(Error::NoConvergence {
        iterations: 8,
        detail: "no random combination diagonalized every sensor".into(),
    })
}

/// Alignment of a classification run's final layers with the singular
/// vectors of M(−u∞).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularVerdict {
    /// Estimated limit direction of Xᵀr.
    pub u_inf: Vec<f64>,
    /// Per-mode residuals at the final record.
    pub residuals: Vec<f64>,
    /// s = M(−u∞) ∘ (u1, …, uL) at the final record.
    pub singular_value: f64,
    /// (fraction of the run, largest per-mode residual).
    pub checkpoints: Vec<(f64, f64)>,
    pub strictly_decreasing: bool,
}

/// Estimates u∞ by averaging normalized Xᵀr over the final 1% of records and
/// evaluates singular residuals of the normalized parameters at 25%, 50% and
/// 100% of the run.
pub fn singular_direction_verdict(
    traj: &Trajectory,
    data: &Dataset,
    arch: &Architecture,
) -> Result<SingularVerdict> {
    if data.task() != Task::Classification {
        return Err(Error::Precondition(
            "singular-vector verdict needs a classification run".into(),
        ));
    }
    if !traj.records.iter().any(|r| r.loss < 1.0) {
        return Err(Error::Precondition("the loss never fell below 1".into()));
    }
    if traj.records.iter().any(|r| r.params.is_none()) {
        return Err(Error::Precondition(
            "the trajectory has no parameter snapshots".into(),
        ));
    }
    let nrec = traj.records.len();
    let tail = (nrec / 100).max(1);
    let mut acc = vec![0.0; data.d()];
    let mut used = 0;
    for r in &traj.records[nrec - tail..] {
        let g = data.x().t_matvec(&r.residual)?;
        if let Some(gn) = normalize(&g) {
            for (a, b) in acc.iter_mut().zip(gn) {
                *a += b;
            }
            used += 1;
        }
    }
    let u_inf = (used > 0)
        .then(|| normalize(&acc))
        .flatten()
        .ok_or_else(|| {
            Error::Precondition("final gradient direction is zero; verdict undefined".into())
        })?;
    let neg: Vec<f64> = u_inf.iter().map(|v| -v).collect();
    let a = arch.build(&neg)?;
    let eval = |idx: usize| -> Result<(Vec<f64>, f64)> {
        let params = traj.records[idx].params.as_ref().expect("checked above");
        let us = params
            .iter()
            .map(|v| normalize(v).ok_or_else(|| Error::Precondition("a layer vanished".into())))
            .collect::<Result<Vec<_>>>()?;
        let sv = crate::tensor::contract_all(&a, &us)?;
        Ok((singular_residual(&a, &us, sv)?, sv))
    };
    let mut checkpoints = Vec::new();
    for frac in [0.25, 0.5, 1.0] {
        let idx = ((frac * (nrec - 1) as f64).round() as usize).min(nrec - 1);
        let (res, _) = eval(idx)?;
        checkpoints.push((frac, res.iter().copied().fold(0.0, f64::max)));
    }
    let (residuals, singular_value) = eval(nrec - 1)?;
    let strictly_decreasing = checkpoints.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(SingularVerdict {
        u_inf,
        residuals,
        singular_value,
        checkpoints,
        strictly_decreasing,
    })
}
