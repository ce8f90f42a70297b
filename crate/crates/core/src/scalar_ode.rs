//! The scalar system p' = p^{L−2} q, q' = p^{L−1} with p(0) = 1, q(0) = 0, and
//! the functions built from it:
//!
//! * h_L(t) = p^{L−1} q, odd and strictly increasing on its interval (−c, c),
//! * H_L(t) = ∫_0^t h_L⁻¹(τ) dτ,
//! * Q(ρ) = α² Σ_j η̄_j² H_L(ρ_j / (α^L |η̄_j|^L)).
//!
//! For L = 2 the solution is p = cosh, q = sinh and closed forms are used. For
//! L ≥ 3 a table is integrated once per depth with adaptive RK4 and cached;
//! point evaluations integrate from the nearest table node. p is even, q and h
//! are odd, and G(t) = ∫_0^t h is even, so only t ≥ 0 is tabulated.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::solvers;
use crate::tol;

/// Values of the system at one time: (p, q, G) with G = ∫_0^t h.
#[derive(Debug, Clone, Copy, PartialEq)]
struct State {
    p: f64,
    q: f64,
    g: f64,
}

fn deriv(depth: usize, s: State) -> State {
    let pl2 = s.p.powi(depth as i32 - 2);
    let pl1 = pl2 * s.p;
    State {
        p: pl2 * s.q,
        q: pl1,
        g: pl1 * s.q,
    }
}

fn axpy(s: State, c: f64, k: State) -> State {
    State {
        p: s.p + c * k.p,
        q: s.q + c * k.q,
        g: s.g + c * k.g,
    }
}

fn rk4(depth: usize, s: State, dt: f64) -> State {
    let k1 = deriv(depth, s);
    let k2 = deriv(depth, axpy(s, 0.5 * dt, k1));
    let k3 = deriv(depth, axpy(s, 0.5 * dt, k2));
    let k4 = deriv(depth, axpy(s, dt, k3));
    State {
        p: s.p + dt / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p),
        q: s.q + dt / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q),
        g: s.g + dt / 6.0 * (k1.g + 2.0 * k2.g + 2.0 * k3.g + k4.g),
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    (a - b).abs() / scale
}

/// One step-doubled RK4 step. Returns the extrapolated state and the relative
/// disagreement between the full step and two half steps.
fn doubled_step(depth: usize, s: State, dt: f64) -> (State, f64) {
    let full = rk4(depth, s, dt);
    let half = rk4(depth, rk4(depth, s, 0.5 * dt), 0.5 * dt);
    let err = rel_gap(full.p, half.p)
        .max(rel_gap(full.q, half.q))
        .max(rel_gap(full.g, half.g));
    let extrap = State {
        p: half.p + (half.p - full.p) / 15.0,
        q: half.q + (half.q - full.q) / 15.0,
        g: half.g + (half.g - full.g) / 15.0,
    };
    (extrap, err)
}

fn finite(s: State) -> bool {
    s.p.is_finite() && s.q.is_finite() && s.g.is_finite()
}

/// Cached solution grid for one depth.
#[derive(Debug, Clone)]
pub struct HlTable {
    depth: usize,
    t: Vec<f64>,
    states: Vec<State>,
    domain_hint: f64,
}

impl HlTable {
    fn build(depth: usize) -> Self {
        let mut t: Vec<f64> = vec![0.0];
        let mut states = vec![State {
            p: 1.0,
            q: 0.0,
            g: 0.0,
        }];
        let mut dt = 1e-3;
        loop {
            let (tc, sc) = (*t.last().unwrap(), *states.last().unwrap());
            if dt <= 4.0 * f64::EPSILON * tc.max(1.0) {
                break;
            }
            let (next, err) = doubled_step(depth, sc, dt);
            if !finite(next) || err > tol::ODE_LOCAL_TOL {
                dt *= if err.is_finite() && err > 0.0 {
                    (0.9 * (tol::ODE_LOCAL_TOL / err).powf(0.2)).clamp(0.1, 0.5)
                } else {
                    0.25
                };
                continue;
            }
            let h = next.p.powi(depth as i32 - 1) * next.q;
            if !h.is_finite() || h > tol::ODE_H_CAP {
                break;
            }
            t.push(tc + dt);
            states.push(next);
            let grow = if err > 0.0 {
                (0.9 * (tol::ODE_LOCAL_TOL / err).powf(0.2)).clamp(1.0, 2.0)
            } else {
                2.0
            };
            dt *= grow;
        }
        let domain_hint = *t.last().unwrap();
        Self {
            depth,
            t,
            states,
            domain_hint,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Largest |t| covered before the solution leaves floating-point range or
    /// the step size collapses near the blowup point.
    pub fn domain_hint(&self) -> f64 {
        self.domain_hint
    }

    /// Tabulated nodes t_i ≥ 0.
    pub fn grid(&self) -> &[f64] {
        &self.t
    }

    /// (p, q, h) at every node.
    pub fn values(&self) -> Vec<(f64, f64, f64)> {
        self.states
            .iter()
            .map(|s| (s.p, s.q, s.p.powi(self.depth as i32 - 1) * s.q))
            .collect()
    }

    fn eval_nonneg(&self, t: f64) -> Result<State> {
        if t > self.domain_hint || t.is_nan() {
            return Err(Error::Domain {
                value: t,
                limit: self.domain_hint,
            });
        }
        let i = self.t.partition_point(|&ti| ti <= t).saturating_sub(1);
        let mut tc = self.t[i];
        let mut s = self.states[i];
        let mut dt = t - tc;
        let mut guard = 0;
        while t - tc > 0.0 {
            guard += 1;
            if guard > 10_000 {
                return Err(Error::NoConvergence {
                    iterations: guard,
                    detail: format!("could not reach t = {t} from table node {tc}"),
                });
            }
            dt = dt.min(t - tc);
            let (next, err) = doubled_step(self.depth, s, dt);
            if finite(next) && err <= tol::ODE_LOCAL_TOL {
                s = next;
                tc = if dt == t - tc { t } else { tc + dt };
            } else {
                dt *= 0.5;
            }
        }
        Ok(s)
    }

    fn eval(&self, t: f64) -> Result<State> {
        let s = self.eval_nonneg(t.abs()).map_err(|e| match e {
            Error::Domain { limit, .. } => Error::Domain { value: t, limit },
            other => other,
        })?;
        Ok(if t < 0.0 {
            State {
                p: s.p,
                q: -s.q,
                g: s.g,
            }
        } else {
            s
        })
    }
}

fn check_depth(depth: usize) -> Result<()> {
    if depth < 2 {
        return Err(Error::Precondition(format!(
            "depth must be >= 2, got {depth}"
        )));
    }
    Ok(())
}

/// Cached table for `depth`, built on first use.
pub fn table(depth: usize) -> Result<Arc<HlTable>> {
    check_depth(depth)?;
    static TABLES: OnceLock<Mutex<HashMap<usize, Arc<HlTable>>>> = OnceLock::new();
    let map = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = map.lock().expect("table cache poisoned").get(&depth) {
        return Ok(Arc::clone(t));
    }
    let built = Arc::new(HlTable::build(depth));
    let mut guard = map.lock().expect("table cache poisoned");
    Ok(Arc::clone(guard.entry(depth).or_insert(built)))
}

/// Largest safe |t| for depth L.
pub fn domain_hint(depth: usize) -> Result<f64> {
    if depth == 2 {
        // sinh(2t)/2 overflows just above this.
        return Ok((f64::MAX.ln() + std::f64::consts::LN_2) / 2.0 - 1e-9);
    }
    Ok(table(depth)?.domain_hint())
}

fn closed_form_domain(t: f64) -> Result<()> {
    let limit = domain_hint(2)?;
    if t.abs() > limit || t.is_nan() {
        return Err(Error::Domain { value: t, limit });
    }
    Ok(())
}

/// (p_L(t), q_L(t)).
pub fn integrate_pq(depth: usize, t: f64) -> Result<(f64, f64)> {
    check_depth(depth)?;
    if depth == 2 {
        closed_form_domain(t)?;
        return Ok((t.cosh(), t.sinh()));
    }
    integrate_pq_ode(depth, t)
}

/// (p_L(t), q_L(t)) from the numerical integrator, also for L = 2.
pub fn integrate_pq_ode(depth: usize, t: f64) -> Result<(f64, f64)> {
    let s = table(depth)?.eval(t)?;
    Ok((s.p, s.q))
}

/// h_L(t) = p^{L−1} q.
pub fn h(depth: usize, t: f64) -> Result<f64> {
    check_depth(depth)?;
    if depth == 2 {
        closed_form_domain(t)?;
        return Ok((2.0 * t).sinh() / 2.0);
    }
    let s = table(depth)?.eval(t)?;
    Ok(s.p.powi(depth as i32 - 1) * s.q)
}

/// h_L'(t) = (L−1) p^{2L−4} q² + p^{2L−2}.
pub fn h_prime(depth: usize, t: f64) -> Result<f64> {
    check_depth(depth)?;
    if depth == 2 {
        closed_form_domain(t)?;
        return Ok((2.0 * t).cosh());
    }
    let s = table(depth)?.eval(t)?;
    let l = depth as i32;
    Ok((l - 1) as f64 * s.p.powi(2 * l - 4) * s.q * s.q + s.p.powi(2 * l - 2))
}

/// G_L(t) = ∫_0^t h_L, even in t.
pub fn h_integral(depth: usize, t: f64) -> Result<f64> {
    check_depth(depth)?;
    if depth == 2 {
        closed_form_domain(t)?;
        let s = t.sinh();
        return Ok(0.5 * s * s);
    }
    Ok(table(depth)?.eval(t)?.g)
}

/// h_L⁻¹(τ) by bracketing and safeguarded Newton iteration.
pub fn h_inv(depth: usize, tau: f64) -> Result<f64> {
    check_depth(depth)?;
    if tau.is_nan() {
        return Err(Error::Domain {
            value: tau,
            limit: f64::INFINITY,
        });
    }
    if depth == 2 {
        let t = (2.0 * tau).asinh() / 2.0;
        if !t.is_finite() {
            return Err(Error::Domain {
                value: tau,
                limit: f64::MAX / 2.0,
            });
        }
        return Ok(t);
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    let target = tau.abs();
    let limit = domain_hint(depth)?;
    let hmax = h(depth, limit)?;
    if target > hmax {
        return Err(Error::Domain {
            value: tau,
            limit: hmax,
        });
    }
    let mut lo = 0.0;
    let mut hi = 1.0f64.min(limit);
    while h(depth, hi)? < target {
        lo = hi;
        hi = (2.0 * hi).min(limit);
    }
    // h(t) ≥ t, so t = target is an upper bound for small targets.
    hi = hi.min(target.max(lo));
    if hi <= lo {
        hi = lo.max(target).min(limit);
    }
    let mut x = 0.5 * (lo + hi);
    let ftol = 1e-15 * target;
    for _ in 0..100 {
        let fx = h(depth, x)? - target;
        if fx.abs() <= ftol {
            break;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = fx / h_prime(depth, x)?;
        let newton = x - step;
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(x.copysign(tau))
}

/// H_L(t) = ∫_0^t h_L⁻¹(τ) dτ, computed as t·u − G(u) with u = h⁻¹(t).
pub fn h_inv_integral(depth: usize, t: f64) -> Result<f64> {
    check_depth(depth)?;
    if depth == 2 {
        let a = t.abs();
        let root = 4.0 * a * a / ((1.0 + 4.0 * a * a).sqrt() + 1.0);
        return Ok(0.5 * (a * (2.0 * a).asinh() - 0.5 * root));
    }
    let a = t.abs();
    let u = h_inv(depth, a)?;
    Ok((a * u - h_integral(depth, u)?).max(0.0))
}

/// H_L(t) by adaptive quadrature of h⁻¹; a cross-check for [`h_inv_integral`].
pub fn h_inv_integral_quadrature(depth: usize, t: f64, eps: f64) -> Result<f64> {
    check_depth(depth)?;
    h_inv(depth, t)?;
    let f = |s: f64| h_inv(depth, s).unwrap_or(f64::NAN);
    let v = solvers::integrate(f, 0.0, t.abs(), eps);
    if !v.is_finite() {
        return Err(Error::NoConvergence {
            iterations: 0,
            detail: "quadrature of h inverse produced a non-finite value".into(),
        });
    }
    Ok(v)
}

fn check_weights(eta_bar: &[f64], rho: &[f64]) -> Result<()> {
    if eta_bar.len() != rho.len() {
        return Err(Error::Shape(format!(
            "eta_bar has length {}, rho has length {}",
            eta_bar.len(),
            rho.len()
        )));
    }
    if let Some(j) = eta_bar.iter().position(|&e| e == 0.0) {
        return Err(Error::Precondition(format!("eta_bar[{j}] is zero")));
    }
    Ok(())
}

/// Q_{L,α,η̄}(ρ) = α² Σ_j η̄_j² H_L(ρ_j / (α^L |η̄_j|^L)).
pub fn q_value(depth: usize, alpha: f64, eta_bar: &[f64], rho: &[f64]) -> Result<f64> {
    check_depth(depth)?;
    check_weights(eta_bar, rho)?;
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let l = depth as i32;
    let mut q = 0.0;
    for (&e, &r) in eta_bar.iter().zip(rho) {
        let scale = alpha.powi(l) * e.abs().powi(l);
        q += e * e * h_inv_integral(depth, r / scale)?;
    }
    Ok(alpha * alpha * q)
}

/// The two limits of Q: (Σ |ρ_j| / |η̄_j|^{L−2}, Σ ρ_j² / η̄_j^{2L−2}).
pub fn q_limits(depth: usize, eta_bar: &[f64], rho: &[f64]) -> Result<(f64, f64)> {
    check_depth(depth)?;
    check_weights(eta_bar, rho)?;
    let l = depth as i32;
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for (&e, &r) in eta_bar.iter().zip(rho) {
        l1 += r.abs() / e.abs().powi(l - 2);
        l2 += r * r / e.abs().powi(2 * l - 2);
    }
    Ok((l1, l2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l3_matches_tangent_solution() {
        // For L = 3, q = tan t and p = sec t.
        for &t in &[0.1, 0.5, 1.0, 1.4, 1.55] {
            let (p, q) = integrate_pq(3, t).unwrap();
            assert!((q - t.tan()).abs() <= 1e-10 * t.tan(), "t={t} q={q}");
            assert!((p - 1.0 / t.cos()).abs() <= 1e-10 / t.cos());
        }
        let c = domain_hint(3).unwrap();
        assert!(c < std::f64::consts::FRAC_PI_2 && c > std::f64::consts::FRAC_PI_2 - 1e-4);
    }

    #[test]
    fn table_nodes_increase() {
        let t = table(4).unwrap();
        assert!(t.grid().windows(2).all(|w| w[0] < w[1]));
        let hs: Vec<f64> = t.values().iter().map(|v| v.2).collect();
        assert!(hs.windows(2).all(|w| w[0] < w[1]));
    }
}
