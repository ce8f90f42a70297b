//! Fixed-step simulation of gradient flow v̇_l = −∇_{v_l} ℒ, with trajectory
//! recording and conserved-quantity monitors.
//!
//! The gradient of layer l is M(Xᵀr) ∘ (v1, …, I, …, vL), where r is the
//! residual vector. [`layer_gradients`] evaluates that formula with dense
//! tensors; the integrator uses an equivalent sparse kernel that only visits
//! the nonzero entries of the data tensors.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};
use crate::decomp::OrthoDecomposition;
use crate::error::{Error, Result};
use crate::solvers::{cosine, dot, norm, sym_eig, Matrix};
use crate::tensor::{contract_except, fc_weight, Architecture, TensorNetwork};
use crate::tol;

/// Residual vector and whether any exponential underflowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub r: Vec<f64>,
    pub saturated: bool,
}

fn residual_from_outputs(f: &[f64], data: &Dataset) -> (Vec<f64>, f64, bool) {
    let y = data.y();
    let mut r = Vec::with_capacity(f.len());
    let mut loss = 0.0;
    let mut saturated = false;
    match data.task() {
        Task::Regression => {
            for (fi, yi) in f.iter().zip(y) {
                let ri = fi - yi;
                loss += 0.5 * ri * ri;
                r.push(ri);
            }
        }
        Task::Classification => {
            for (fi, yi) in f.iter().zip(y) {
                let expo = -yi * fi;
                if expo < tol::EXP_UNDERFLOW {
                    saturated = true;
                    r.push(0.0);
                } else {
                    let e = expo.exp();
                    loss += e;
                    r.push(-yi * e);
                }
            }
        }
    }
    (r, loss, saturated)
}

fn outputs(net: &TensorNetwork, data: &Dataset) -> Result<Vec<f64>> {
    (0..data.n()).map(|i| net.forward(data.point(i))).collect()
}

fn check_match(arch: &Architecture, data: &Dataset) -> Result<()> {
    if arch.input_dim() != data.d() {
        return Err(Error::Shape(format!(
            "architecture expects inputs of length {}, data has {}",
            arch.input_dim(),
            data.d()
        )));
    }
    Ok(())
}

/// r_i = −y_i exp(−y_i f(x_i)) for classification, f(x_i) − y_i for regression.
pub fn residual(net: &TensorNetwork, data: &Dataset) -> Result<Residual> {
    check_match(&net.arch, data)?;
    let (r, _, saturated) = residual_from_outputs(&outputs(net, data)?, data);
    Ok(Residual { r, saturated })
}

pub fn loss(net: &TensorNetwork, data: &Dataset) -> Result<f64> {
    check_match(&net.arch, data)?;
    Ok(residual_from_outputs(&outputs(net, data)?, data).1)
}

/// ∇_{v_l} ℒ = M(Xᵀr) ∘ (v1, …, I, …, vL) for every layer. The flow moves
/// along the negative of these.
pub fn layer_gradients(net: &TensorNetwork, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let res = residual(net, data)?;
    let xtr = data.x().t_matvec(&res.r)?;
    let m = net.arch.build(&xtr)?;
    (0..net.depth())
        .map(|l| contract_except(&m, &net.params, l))
        .collect()
}

/// Nonzero pattern of M(p) for a list of points p, shared across points.
#[derive(Debug, Clone)]
struct Kernel {
    depth: usize,
    /// nnz × L multi-indices.
    idx: Vec<usize>,
    /// points × nnz values.
    vals: Vec<f64>,
    nnz: usize,
}

impl Kernel {
    fn new(arch: &Architecture, points: &[Vec<f64>]) -> Result<Self> {
        let depth = arch.depth();
        let tensors = points
            .iter()
            .map(|p| arch.build(p))
            .collect::<Result<Vec<_>>>()?;
        let len = tensors[0].len();
        let mut flat_nz = Vec::new();
        let mut mask = vec![false; len];
        for t in &tensors {
            for (e, &v) in t.data().iter().enumerate() {
                if v != 0.0 {
                    mask[e] = true;
                }
            }
        }
        let shape = arch.shape();
        let mut idx = Vec::new();
        let mut multi = vec![0usize; depth];
        for (e, &keep) in mask.iter().enumerate() {
            if keep {
                flat_nz.push(e);
                idx.extend_from_slice(&multi);
            }
            for m in (0..depth).rev() {
                multi[m] += 1;
                if multi[m] < shape[m] {
                    break;
                }
                multi[m] = 0;
            }
        }
        let nnz = flat_nz.len();
        let mut vals = Vec::with_capacity(points.len() * nnz);
        for t in &tensors {
            vals.extend(flat_nz.iter().map(|&e| t.data()[e]));
        }
        Ok(Self {
            depth,
            idx,
            vals,
            nnz,
        })
    }

    /// Products Π_l v_l[j_l] for every nonzero entry.
    fn entry_products(&self, params: &[Vec<f64>], out: &mut Vec<f64>) {
        out.clear();
        for e in 0..self.nnz {
            let ix = &self.idx[e * self.depth..(e + 1) * self.depth];
            out.push(ix.iter().zip(params).map(|(&j, v)| v[j]).product());
        }
    }

    fn eval_point(&self, point: usize, prods: &[f64]) -> f64 {
        dot(&self.vals[point * self.nnz..(point + 1) * self.nnz], prods)
    }

    /// Σ_i r_i M(x_i) ∘ (v1, …, I, …, vL) for each layer; points 0..r.len().
    fn gradients(&self, params: &[Vec<f64>], r: &[f64], grads: &mut [Vec<f64>]) {
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|a| *a = 0.0);
        }
        for e in 0..self.nnz {
            let mut c = 0.0;
            for (i, ri) in r.iter().enumerate() {
                c += ri * self.vals[i * self.nnz + e];
            }
            if c == 0.0 {
                continue;
            }
            let ix = &self.idx[e * self.depth..(e + 1) * self.depth];
            for l in 0..self.depth {
                let mut p = c;
                for (m, (&j, v)) in ix.iter().zip(params).enumerate() {
                    if m != l {
                        p *= v[j];
                    }
                }
                grads[l][ix[l]] += p;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
}

/// Time variable of the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScale {
    /// Steps of length η in the flow time t.
    #[default]
    Physical,
    /// Steps of length η in τ with dτ = ℒ dt, i.e. the field −∇ℒ/ℒ. The path
    /// is the same as the gradient flow's; t is accumulated alongside. This
    /// reaches tiny classification losses in few steps.
    LossNormalized,
}

/// Conserved quantities recorded alongside a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Monitor {
    #[default]
    None,
    /// |[U_lᵀ v_l]_j|² − |[U_Lᵀ v_L]_j|² for a decomposition.
    Balance(OrthoDecomposition),
    /// Same gaps for real bases U_l (for example the SVD of a single data tensor).
    BasisBalance(Vec<Matrix>),
    /// Entries of W_lᵀW_l − W_{l+1}W_{l+1}ᵀ for a fully-connected network.
    FcBalance,
}

impl Monitor {
    fn names(&self, net: &TensorNetwork) -> Result<Vec<String>> {
        Ok(match self {
            Monitor::None => Vec::new(),
            Monitor::Balance(_) | Monitor::BasisBalance(_) => {
                let g = self.values_matrix(net)?;
                let mut v = Vec::new();
                for l in 0..g.rows() {
                    for j in 0..g.cols() {
                        v.push(format!("diag_gap_{}_{}", l + 1, j + 1));
                    }
                }
                v
            }
            Monitor::FcBalance => {
                let terms = fc_balance(net)?;
                let mut v = Vec::new();
                for (l, t) in terms.iter().enumerate() {
                    for a in 0..t.matrix.rows() {
                        for b in 0..t.matrix.cols() {
                            v.push(format!("diag_fc_{}_{}_{}", l + 1, a + 1, b + 1));
                        }
                    }
                }
                v
            }
        })
    }

    fn values_matrix(&self, net: &TensorNetwork) -> Result<Matrix> {
        match self {
            Monitor::Balance(dec) => balance_gap(net, dec),
            Monitor::BasisBalance(us) => basis_balance_gap(&net.params, us),
            _ => Err(Error::Precondition("monitor has no gap matrix".into())),
        }
    }

    /// Current monitored values, flattened.
    pub fn values(&self, net: &TensorNetwork) -> Result<Vec<f64>> {
        Ok(match self {
            Monitor::None => Vec::new(),
            Monitor::Balance(_) | Monitor::BasisBalance(_) => {
                self.values_matrix(net)?.data().to_vec()
            }
            Monitor::FcBalance => fc_balance(net)?
                .into_iter()
                .flat_map(|t| t.matrix.data().to_vec())
                .collect(),
        })
    }
}

/// Settings of one gradient-flow run.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Initial scale α; parameters start at α·v̄_l.
    pub alpha: f64,
    pub init_directions: Vec<Vec<f64>>,
    pub integrator: Integrator,
    pub step: f64,
    pub max_steps: usize,
    pub stop_loss: f64,
    pub record_every: usize,
    pub time_scale: TimeScale,
    pub record_params: bool,
    pub monitor: Monitor,
}

impl FlowConfig {
    pub fn new(alpha: f64, init_directions: Vec<Vec<f64>>) -> Self {
        Self {
            alpha,
            init_directions,
            integrator: Integrator::Rk4,
            step: 1e-3,
            max_steps: 10_000,
            stop_loss: 1e-30,
            record_every: 100,
            time_scale: TimeScale::Physical,
            record_params: false,
            monitor: Monitor::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Precondition(format!(
                "initial scale must be positive and finite, got {}",
                self.alpha
            )));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Precondition(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.stop_loss > 0.0) {
            return Err(Error::Precondition(format!(
                "stop_loss must be positive, got {}",
                self.stop_loss
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Precondition(
                "record_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Loss fell to `stop_loss`.
    Converged,
    /// `max_steps` ran out first.
    StepBudget,
}

/// One recorded state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub step: usize,
    pub t: f64,
    pub loss: f64,
    pub beta: Vec<f64>,
    pub residual: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<Vec<f64>>>,
    pub diag: Vec<f64>,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub status: RunStatus,
    pub steps: usize,
    pub final_net: TensorNetwork,
    pub diag_names: Vec<String>,
    /// Some residual underflowed at some point of the run.
    pub saturated: bool,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectory has records")
    }

    pub fn terminal_beta(&self) -> &[f64] {
        &self.last().beta
    }

    /// Largest change of any monitored value relative to the first record.
    pub fn max_diag_drift(&self) -> f64 {
        let first = &self.records[0].diag;
        self.records
            .iter()
            .flat_map(|r| r.diag.iter().zip(first).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// CSV with header `step,t,loss,beta_1..beta_d[,diag_*]`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let d = self.records[0].beta.len();
        let mut s = String::from("step,t,loss");
        for j in 1..=d {
            let _ = write!(s, ",beta_{j}");
        }
        for n in &self.diag_names {
            let _ = write!(s, ",{n}");
        }
        s.push('\n');
        for r in &self.records {
            let _ = write!(s, "{},{:.16e},{:.16e}", r.step, r.t, r.loss);
            for v in r.beta.iter().chain(&r.diag) {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        s
    }
}

struct Evaluation {
    loss: f64,
    r: Vec<f64>,
    grads: Vec<Vec<f64>>,
    saturated: bool,
}

struct Engine<'a> {
    kernel: Kernel,
    data: &'a Dataset,
    prods: Vec<f64>,
}

impl Engine<'_> {
    fn evaluate(&mut self, params: &[Vec<f64>]) -> Evaluation {
        self.kernel.entry_products(params, &mut self.prods);
        let f: Vec<f64> = (0..self.data.n())
            .map(|i| self.kernel.eval_point(i, &self.prods))
            .collect();
        let (r, loss, saturated) = residual_from_outputs(&f, self.data);
        let mut grads: Vec<Vec<f64>> = params.iter().map(|v| vec![0.0; v.len()]).collect();
        self.kernel.gradients(params, &r, &mut grads);
        Evaluation {
            loss,
            r,
            grads,
            saturated,
        }
    }

    fn beta(&mut self, params: &[Vec<f64>]) -> Vec<f64> {
        self.kernel.entry_products(params, &mut self.prods);
        let n = self.data.n();
        (0..self.data.d())
            .map(|j| self.kernel.eval_point(n + j, &self.prods))
            .collect()
    }
}

/// Velocity −g/ℒ or −g depending on the time scale, with dt/dτ.
fn velocity(ev: &Evaluation, scale: TimeScale) -> (f64, f64) {
    match scale {
        TimeScale::Physical => (-1.0, 1.0),
        TimeScale::LossNormalized => (-1.0 / ev.loss, 1.0 / ev.loss),
    }
}

fn shifted(params: &[Vec<f64>], c: f64, dir: &[Vec<f64>]) -> Vec<Vec<f64>> {
    params
        .iter()
        .zip(dir)
        .map(|(v, g)| v.iter().zip(g).map(|(a, b)| a + c * b).collect())
        .collect()
}

fn params_finite(params: &[Vec<f64>]) -> bool {
    params.iter().flatten().all(|a| a.is_finite())
}

/// Integrates gradient flow from α·v̄ until the loss reaches `stop_loss` or
/// `max_steps` steps have been taken.
pub fn run(arch: &Architecture, data: &Dataset, cfg: &FlowConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_match(arch, data)?;
    let mut net = TensorNetwork::scaled(arch.clone(), cfg.alpha, &cfg.init_directions)?;
    let d = data.d();
    let mut points: Vec<Vec<f64>> = (0..data.n()).map(|i| data.point(i).to_vec()).collect();
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        points.push(e);
    }
    let mut engine = Engine {
        kernel: Kernel::new(arch, &points)?,
        data,
        prods: Vec::new(),
    };
    let diag_names = cfg.monitor.names(&net)?;
    let mut ev = engine.evaluate(&net.params);
    let mut t = 0.0;
    let mut records = Vec::new();
    let mut any_saturated = ev.saturated;
    let record = |step: usize,
                  t: f64,
                  net: &TensorNetwork,
                  ev: &Evaluation,
                  engine: &mut Engine|
     -> Result<Record> {
        Ok(Record {
            step,
            t,
            loss: ev.loss,
            beta: engine.beta(&net.params),
            residual: ev.r.clone(),
            params: cfg.record_params.then(|| net.params.clone()),
            diag: cfg.monitor.values(net)?,
            saturated: ev.saturated,
        })
    };
    records.push(record(0, t, &net, &ev, &mut engine)?);
    let mut status = RunStatus::StepBudget;
    let mut steps = 0;
    if ev.loss <= cfg.stop_loss {
        status = RunStatus::Converged;
    }
    let eta = cfg.step;
    while status == RunStatus::StepBudget && steps < cfg.max_steps {
        let (next, dt) = match cfg.integrator {
            Integrator::Euler => {
                let (c, tr) = velocity(&ev, cfg.time_scale);
                (shifted(&net.params, c * eta, &ev.grads), eta * tr)
            }
            Integrator::Rk4 => {
                let (c1, t1) = velocity(&ev, cfg.time_scale);
                let p2 = shifted(&net.params, 0.5 * eta * c1, &ev.grads);
                let e2 = engine.evaluate(&p2);
                let (c2, t2) = velocity(&e2, cfg.time_scale);
                let p3 = shifted(&net.params, 0.5 * eta * c2, &e2.grads);
                let e3 = engine.evaluate(&p3);
                let (c3, t3) = velocity(&e3, cfg.time_scale);
                let p4 = shifted(&net.params, eta * c3, &e3.grads);
                let e4 = engine.evaluate(&p4);
                let (c4, t4) = velocity(&e4, cfg.time_scale);
                let next: Vec<Vec<f64>> = (0..net.params.len())
                    .map(|l| {
                        (0..net.params[l].len())
                            .map(|j| {
                                net.params[l][j]
                                    + eta / 6.0
                                        * (c1 * ev.grads[l][j]
                                            + 2.0 * c2 * e2.grads[l][j]
                                            + 2.0 * c3 * e3.grads[l][j]
                                            + c4 * e4.grads[l][j])
                            })
                            .collect()
                    })
                    .collect();
                (next, eta / 6.0 * (t1 + 2.0 * t2 + 2.0 * t3 + t4))
            }
        };
        steps += 1;
        let next_ev = if params_finite(&next) {
            Some(engine.evaluate(&next))
        } else {
            None
        };
        match next_ev {
            Some(e) if e.loss.is_finite() && dt.is_finite() => {
                net.params = next;
                ev = e;
                t += dt;
            }
            _ => {
                return Err(Error::NonFinite {
                    step: steps,
                    t,
                    last_params: net.params.clone(),
                })
            }
        }
        any_saturated |= ev.saturated;
        if ev.loss <= cfg.stop_loss {
            status = RunStatus::Converged;
        }
        if status == RunStatus::Converged || steps % cfg.record_every == 0 || steps == cfg.max_steps
        {
            records.push(record(steps, t, &net, &ev, &mut engine)?);
        }
    }
    Ok(Trajectory {
        records,
        status,
        steps,
        final_net: net,
        diag_names,
        saturated: any_saturated,
    })
}

/// (L−1)×m matrix of |[U_lᵀ v_l]_j|² − |[U_Lᵀ v_L]_j|².
pub fn balance_gap(net: &TensorNetwork, decomp: &OrthoDecomposition) -> Result<Matrix> {
    let shape = net.arch.shape();
    if decomp.us.len() != shape.len() {
        return Err(Error::Shape(format!(
            "decomposition has {} layers, network has {}",
            decomp.us.len(),
            shape.len()
        )));
    }
    for (l, u) in decomp.us.iter().enumerate() {
        if u.rows() != shape[l] {
            return Err(Error::ModeMismatch {
                mode: l,
                expected: shape[l],
                got: u.rows(),
            });
        }
    }
    let etas = decomp.transform(&net.params)?;
    let last: Vec<f64> = etas[etas.len() - 1].iter().map(|z| z.norm_sqr()).collect();
    let mut g = Matrix::zeros(etas.len() - 1, decomp.m());
    for (l, eta) in etas[..etas.len() - 1].iter().enumerate() {
        for (j, z) in eta.iter().enumerate() {
            g[(l, j)] = z.norm_sqr() - last[j];
        }
    }
    Ok(g)
}

/// Balance gaps for real bases U_l (k_l × m).
pub fn basis_balance_gap(params: &[Vec<f64>], us: &[Matrix]) -> Result<Matrix> {
    if params.len() != us.len() || us.is_empty() {
        return Err(Error::Shape(format!(
            "{} bases for {} layers",
            us.len(),
            params.len()
        )));
    }
    let etas = params
        .iter()
        .zip(us)
        .map(|(v, u)| u.t_matvec(v))
        .collect::<Result<Vec<_>>>()?;
    let m = us[0].cols();
    let last = &etas[etas.len() - 1];
    let mut g = Matrix::zeros(etas.len() - 1, m);
    for l in 0..etas.len() - 1 {
        for j in 0..m {
            g[(l, j)] = etas[l][j] * etas[l][j] - last[j] * last[j];
        }
    }
    Ok(g)
}

/// W_lᵀW_l − W_{l+1}W_{l+1}ᵀ with its eigenvalues (descending).
#[derive(Debug, Clone, PartialEq)]
pub struct FcBalanceTerm {
    pub matrix: Matrix,
    pub eigenvalues: Vec<f64>,
}

pub fn fc_balance(net: &TensorNetwork) -> Result<Vec<FcBalanceTerm>> {
    let Architecture::FullyConnected { widths } = &net.arch else {
        return Err(Error::Precondition(
            "fc_balance needs a fully-connected network".into(),
        ));
    };
    let ws = (0..widths.len())
        .map(|l| fc_weight(widths, &net.params, l))
        .collect::<Result<Vec<_>>>()?;
    ws.windows(2)
        .map(|p| {
            let a = p[0].transpose().matmul(&p[0])?;
            let b = p[1].matmul(&p[1].transpose())?;
            let matrix = a.sub(&b)?;
            let (_, eigenvalues) = sym_eig(&matrix)?;
            Ok(FcBalanceTerm {
                matrix,
                eigenvalues,
            })
        })
        .collect()
}

/// cos(v_l, −∇_{v_l}ℒ) per layer and for the whole parameter vector. `None`
/// marks an undefined cosine (zero gradient or zero parameters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub per_layer: Vec<Option<f64>>,
    pub global: Option<f64>,
}

pub fn alignment(net: &TensorNetwork, data: &Dataset) -> Result<Alignment> {
    let grads = layer_gradients(net, data)?;
    let neg: Vec<Vec<f64>> = grads
        .iter()
        .map(|g| g.iter().map(|a| -a).collect())
        .collect();
    let per_layer = net
        .params
        .iter()
        .zip(&neg)
        .map(|(v, g)| cosine(v, g))
        .collect();
    let flat_v: Vec<f64> = net.params.iter().flatten().copied().collect();
    let flat_g: Vec<f64> = neg.iter().flatten().copied().collect();
    let global = if norm(&flat_g) == 0.0 {
        None
    } else {
        cosine(&flat_v, &flat_g)
    };
    Ok(Alignment { per_layer, global })
}
