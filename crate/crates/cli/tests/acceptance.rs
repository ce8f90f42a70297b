//! Acceptance runs: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::panic;
use std::time::{Duration, Instant};

use linbias::flow::{layer_gradients, loss};
use linbias::predictors::{min_l1_interpolant_a, q_minimizer, weighted_min_l2};
use linbias::scalar_ode::{h, h_inv};
use linbias::solvers::{dist, norm};
use linbias::{Architecture, Dataset, Matrix, Task, TensorNetwork};
use linbias_cli::pipeline::{self, Report};
use linbias_cli::{load_preset, preset_names, ExperimentConfig, Resolved};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: &[(&str, Check)] = &[
        ("fig1-regression", fig1_regression),
        ("two-layer-regression-closed-form", two_layer_regression),
        ("q-minimizer-limit", q_minimizer_limit),
        ("q-interpolation", q_interpolation),
        ("depth-ode-scalar-functions", scalar_functions),
        ("balance-conservation", conservation),
        ("gradient-finite-differences", gradient_oracle),
        ("single-point-directions", single_point_directions),
        ("min-l2-sweep", min_l2_sweep),
        ("commuting-sensing", commuting_sensing),
        ("fig3-classification", fig3_classification),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}  ({secs:.2}s)  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}  ({secs:.2}s)  {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn verdict(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    if t <= limit {
        Ok(())
    } else {
        Err(format!(
            "took {:.1}s, limit {:.0}s",
            t.as_secs_f64(),
            limit.as_secs_f64()
        ))
    }
}

fn resolve(cfg: Value) -> Resolved {
    ExperimentConfig::from_json(&cfg.to_string())
        .and_then(|c| c.resolve(std::path::Path::new(".")))
        .unwrap_or_else(|e| panic!("{e}"))
}

fn compare(res: &Resolved) -> Report {
    let dir = tempfile::tempdir().unwrap();
    pipeline::run_compare(res, dir.path()).unwrap_or_else(|e| panic!("{e}"))
}

fn run_report<'a>(report: &'a Report, label: &str, alpha: f64) -> &'a pipeline::RunReport {
    report
        .runs
        .iter()
        .find(|r| r.label == label && r.alpha == alpha)
        .unwrap_or_else(|| panic!("no run {label} at alpha {alpha}"))
}

fn terminal_beta(runs: &[pipeline::Run], label: &str, alpha: f64) -> Vec<f64> {
    runs.iter()
        .find(|r| r.label == label && r.alpha == alpha)
        .map(|r| r.trajectory.terminal_beta().to_vec())
        .unwrap_or_else(|| panic!("no run {label} at alpha {alpha}"))
}

fn fig1_regression() -> Result<String, String> {
    let start = Instant::now();
    let res = load_preset("fig1-regression").map_err(|e| e.to_string())?;
    let runs = pipeline::simulate(&res).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(10))?;
    let targets = [
        ("fully_connected", vec![0.2, 0.4]),
        ("diagonal", vec![0.0, 0.5]),
        ("convolutional", vec![1.0 / 3.0, 1.0 / 3.0]),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, target) in &targets {
        let d = dist(&terminal_beta(&runs, label, 0.01), target);
        ok &= d <= 1e-2;
        parts.push(format!("{label} {d:.2e}"));
    }
    verdict(
        ok,
        format!("distance at alpha=0.01 (tol 1e-2): {}", parts.join(", ")),
    )
}

/// A random two-layer architecture whose single-point data tensor has at
/// most four singular values.
fn random_two_layer(rng: &mut ChaCha8Rng) -> Architecture {
    match rng.gen_range(0..3) {
        0 => Architecture::Diagonal {
            d: rng.gen_range(2..=4),
            depth: 2,
        },
        1 => {
            let d = rng.gen_range(2..=4);
            Architecture::Convolutional {
                d,
                filters: vec![rng.gen_range(1..=d), d],
            }
        }
        _ => Architecture::FullyConnected {
            widths: vec![rng.gen_range(1..=4), rng.gen_range(1..=3)],
        },
    }
}

fn two_layer_regression() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut experiments = Vec::new();
    while experiments.len() < 5 {
        let arch = random_two_layer(&mut rng);
        let s = arch.shape();
        let d = arch.input_dim();
        let v1: Vec<f64> = (0..s[0]).map(|_| rng.gen_range(0.6..1.5)).collect();
        let v2: Vec<f64> = (0..s[1]).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let y = rng.gen_range(0.3..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let valid = linbias::predictors::predict_two_layer_regression(&arch, &x, y, &v1, &v2, 0.7);
        if valid.is_err() {
            continue;
        }
        experiments.push(json!({
            "label": format!("net-{}", experiments.len()),
            "arch": arch,
            "init": [v1, v2],
            "dataset": { "x": [x], "y": [y] },
            "predictor": "two_layer_regression",
            "check": { "max_param_distance": 1e-4 },
            "monitor": "data_svd_balance",
        }));
    }
    let res = resolve(json!({
        "name": "random-two-layer-regression",
        "task": "regression",
        "flow": { "alphas": [0.7], "step": 1e-2, "steps": 400000, "integrator": "rk4",
                  "record_every": 10000, "stop_loss": 1e-26 },
        "experiments": experiments,
    }));
    let report = compare(&res);
    within(start, Duration::from_secs(30))?;
    let worst = report
        .runs
        .iter()
        .map(|r| r.param_distance.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let archs: Vec<String> = res
        .config
        .experiments
        .iter()
        .map(|e| format!("{:?}", e.arch))
        .collect();
    verdict(
        report.passed && worst <= 1e-4,
        format!(
            "worst parameter distance {worst:.2e} (tol 1e-4) over {}",
            archs.join("; ")
        ),
    )
}

fn q_minimizer_limit() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for draw in 0..2 {
        let x: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eta: Vec<f64> = (0..4).map(|_| rng.gen_range(0.5..1.5)).collect();
        let experiments: Vec<Value> = [2usize, 3]
            .iter()
            .map(|&depth| {
                let mut init = vec![eta.clone(); depth - 1];
                init.push(vec![0.0; 4]);
                json!({
                    "label": format!("draw{draw}-depth{depth}"),
                    "arch": { "kind": "diagonal", "d": 4, "depth": depth },
                    "init": init,
                    "predictor": "q_minimizer",
                    "check": { "max_relative_distance": 1e-3 },
                    "monitor": "balance",
                })
            })
            .collect();
        let res = resolve(json!({
            "name": "random-q-regression",
            "task": "regression",
            "dataset": { "x": x, "y": y },
            "flow": { "alphas": [0.3, 1.0], "step": 1e-2, "steps": 1000000, "integrator": "rk4",
                      "record_every": 10000, "stop_loss": 1e-26 },
            "experiments": experiments,
        }));
        let preds = pipeline::predict(&res).map_err(|e| e.to_string())?;
        let report = compare(&res);
        for r in &report.runs {
            let p = preds
                .runs
                .iter()
                .find(|p| p.label == r.label && p.alpha == r.alpha)
                .expect("every run has a prediction");
            let rel = r.distance.unwrap_or(f64::INFINITY) / norm(&p.prediction.value);
            worst = worst.max(rel);
            count += 1;
        }
    }
    within(start, Duration::from_secs(60))?;
    verdict(
        worst <= 1e-3,
        format!("worst relative distance {worst:.2e} (tol 1e-3) over {count} runs, depths 2 and 3"),
    )
}

fn q_interpolation() -> Result<String, String> {
    // Unit-margin data whose ℓ1 dual certificate leaves slack on the
    // off-support coordinates, so the small-α minimizer sits close to ℓ1.
    let cases = [
        (Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap(), vec![1.0]),
        (
            Matrix::from_rows(&[vec![2.0, 0.0, 0.5, 0.3], vec![0.0, 2.0, 0.4, -0.5]]).unwrap(),
            vec![1.0, 1.0],
        ),
    ];
    let mut worst_small: f64 = 0.0;
    let mut worst_large: f64 = 0.0;
    for (x, y) in &cases {
        let d = x.cols();
        let id = Matrix::identity(d);
        let l1 = min_l1_interpolant_a(x, y, None).map_err(|e| e.to_string())?;
        let small = q_minimizer(2, 1e-3, &vec![1.0; d], &id, x, y).map_err(|e| e.to_string())?;
        worst_small = worst_small.max(dist(&small.rho, &l1) / norm(&l1));
        for depth in [2usize, 3] {
            let eta: Vec<f64> = (0..d).map(|j| 0.7 + 0.2 * j as f64).collect();
            let w: Vec<f64> = eta.iter().map(|e| e.powi(2 * depth as i32 - 2)).collect();
            let l2 = weighted_min_l2(x, y, &w).map_err(|e| e.to_string())?;
            let large = q_minimizer(depth, 1e3, &eta, &id, x, y).map_err(|e| e.to_string())?;
            worst_large = worst_large.max(dist(&large.rho, &l2) / norm(&l2));
        }
    }
    verdict(
        worst_small <= 1e-3 && worst_large <= 1e-3,
        format!(
            "alpha=1e-3 vs l1 {worst_small:.2e}, alpha=1e3 vs weighted l2 {worst_large:.2e} (tol 1e-3)"
        ),
    )
}

fn scalar_functions() -> Result<String, String> {
    let grid: Vec<f64> = (0..=2000)
        .map(|i| -5.0 + 10.0 * i as f64 / 2000.0)
        .collect();
    let mut closed: f64 = 0.0;
    for &t in &grid {
        let v = h(2, t).map_err(|e| e.to_string())?;
        closed = closed.max((v - (2.0 * t).sinh() / 2.0).abs());
    }
    let mut shape_ok = true;
    let mut round_trip: f64 = 0.0;
    for depth in [2usize, 3, 4] {
        let hint = linbias::scalar_ode::domain_hint(depth).map_err(|e| e.to_string())?;
        let ts: Vec<f64> = (0..=400)
            .map(|i| hint * (-1.0 + 2.0 * i as f64 / 400.0))
            .collect();
        let hs: Vec<f64> = ts.iter().map(|&t| h(depth, t).unwrap()).collect();
        shape_ok &= hs.windows(2).all(|w| w[1] > w[0]);
        shape_ok &= ts
            .iter()
            .zip(&hs)
            .all(|(&t, &v)| (h(depth, -t).unwrap() + v).abs() <= 1e-12 * v.abs().max(1.0));
        for k in -12..=12 {
            for sign in [-1.0, 1.0] {
                let tau = sign * 10f64.powf(k as f64 / 2.0);
                let back = h(depth, h_inv(depth, tau).map_err(|e| e.to_string())?).unwrap();
                round_trip = round_trip.max((back - tau).abs() / tau.abs());
            }
        }
    }
    verdict(
        closed <= 1e-9 && shape_ok && round_trip <= 1e-9,
        format!(
            "h_2 vs sinh(2t)/2 {closed:.2e}, odd and increasing for L=2,3,4: {shape_ok}, \
             round trip {round_trip:.2e} (tol 1e-9)"
        ),
    )
}

fn conservation() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    let mut names = Vec::new();
    for name in preset_names().map_err(|e| e.to_string())? {
        let res = load_preset(&name).map_err(|e| e.to_string())?;
        let rk4 = res
            .config
            .flow
            .as_ref()
            .is_some_and(|f| f.integrator == linbias::flow::Integrator::Rk4);
        if !rk4 {
            continue;
        }
        if let Some(e) = res
            .config
            .experiments
            .iter()
            .find(|e| e.monitor == linbias_cli::config::MonitorKind::None)
        {
            return Err(format!(
                "{name}: experiment {} has no balance monitor",
                e.label
            ));
        }
        for run in pipeline::simulate(&res).map_err(|e| e.to_string())? {
            worst = worst.max(run.trajectory.max_diag_drift());
        }
        names.push(name);
    }
    verdict(
        !names.is_empty() && worst <= 1e-6,
        format!(
            "largest drift {worst:.2e} (tol 1e-6) over {}",
            names.join(", ")
        ),
    )
}

fn gradient_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut states = 0;
    while states < 100 {
        let arch = match states % 3 {
            0 => Architecture::Diagonal {
                d: rng.gen_range(1..=4),
                depth: rng.gen_range(2..=4),
            },
            1 => {
                let d = rng.gen_range(1..=4);
                let depth = rng.gen_range(2..=3);
                let mut filters: Vec<usize> = (1..depth).map(|_| rng.gen_range(1..=d)).collect();
                filters.push(d);
                Architecture::Convolutional { d, filters }
            }
            _ => {
                let depth = rng.gen_range(2..=3);
                Architecture::FullyConnected {
                    widths: (0..depth).map(|_| rng.gen_range(1..=3)).collect(),
                }
            }
        };
        let params: Vec<Vec<f64>> = arch
            .shape()
            .iter()
            .map(|&n| (0..n).map(|_| rng.gen_range(-1.2..1.2)).collect())
            .collect();
        let d = arch.input_dim();
        let n = rng.gen_range(1..=d.min(3));
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        let task = if rng.gen_bool(0.5) {
            Task::Regression
        } else {
            Task::Classification
        };
        let y: Vec<f64> = (0..n)
            .map(|_| match task {
                Task::Regression => rng.gen_range(-1.0..1.0),
                Task::Classification => {
                    if rng.gen_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            })
            .collect();
        let Ok(data) = Dataset::from_rows(&rows, y, task) else {
            continue;
        };
        let net = TensorNetwork::new(arch.clone(), params.clone()).map_err(|e| e.to_string())?;
        let g: Vec<f64> = layer_gradients(&net, &data)
            .map_err(|e| e.to_string())?
            .concat();
        let e = 1e-5;
        let mut fd = Vec::with_capacity(g.len());
        for l in 0..params.len() {
            for j in 0..params[l].len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus[l][j] += e;
                minus[l][j] -= e;
                let fp = loss(&TensorNetwork::new(arch.clone(), plus).unwrap(), &data).unwrap();
                let fm = loss(&TensorNetwork::new(arch.clone(), minus).unwrap(), &data).unwrap();
                fd.push((fp - fm) / (2.0 * e));
            }
        }
        let scale = norm(&fd);
        if scale < 1e-3 {
            continue;
        }
        worst = worst.max(dist(&g, &fd) / scale);
        states += 1;
    }
    verdict(
        worst <= 1e-6,
        format!("worst relative error {worst:.2e} (tol 1e-6) over {states} states"),
    )
}

fn single_point_directions() -> Result<String, String> {
    let start = Instant::now();
    let res = load_preset("single-point-classification").map_err(|e| e.to_string())?;
    let report = compare(&res);
    within(start, Duration::from_secs(120))?;
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &report.runs {
        let cos = r.cosine.unwrap_or(f64::NAN);
        let decreasing = r.verdict_strictly_decreasing == Some(true);
        ok &= r.final_loss <= 1e-10 && cos >= 0.99 && decreasing;
        parts.push(format!(
            "{} loss {:.1e} cos {cos:.5} verdict {}",
            r.label,
            r.final_loss,
            if decreasing {
                "decreasing"
            } else {
                "not decreasing"
            }
        ));
    }
    verdict(ok && !report.runs.is_empty(), parts.join("; "))
}

fn min_l2_sweep() -> Result<String, String> {
    let res = load_preset("min-l2-sweep").map_err(|e| e.to_string())?;
    let runs = pipeline::simulate(&res).map_err(|e| e.to_string())?;
    let mut alphas = res.config.flow().alphas.clone();
    alphas.sort_by(|a, b| b.total_cmp(a));
    let d: Vec<f64> = alphas
        .iter()
        .map(|&a| dist(&terminal_beta(&runs, "fully_connected", a), &[0.2, 0.4]))
        .collect();
    let decreasing = d.windows(2).all(|w| w[1] < w[0]);
    let last = *d.last().unwrap();
    verdict(
        decreasing && last <= 1e-2 && alphas.last() == Some(&0.03),
        format!("alphas {alphas:?} distances {}, strictly decreasing: {decreasing}, at 0.03 {last:.2e} (tol 1e-2)", sci(&d)),
    )
}

fn commuting_sensing() -> Result<String, String> {
    let res = load_preset("commuting-sensing").map_err(|e| e.to_string())?;
    let report = compare(&res);
    let preds = pipeline::predict(&res).map_err(|e| e.to_string())?;
    let s = preds.sensing.ok_or("no sensing prediction")?;
    let r = report.sensing.ok_or("no sensing report")?;
    // Minimum nuclear norm: minimize Σ|λ| with λ1 + 0.1λ2 = 1 = 0.1λ2 + λ3,
    // attained at diag(1, 0, 1).
    let mut sorted = s.oracle_eigenvalues.clone();
    sorted.sort_by(f64::total_cmp);
    let oracle_ok = dist(&sorted, &[0.0, 1.0, 1.0]) <= 1e-12;
    let target = [
        vec![1.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    let m_dist = dist(&s.m.concat(), &target.concat());
    verdict(
        r.measurement_residual <= 1e-8 && r.oracle_distance <= 1e-3 && m_dist <= 1e-3 && oracle_ok,
        format!(
            "measurement residual {:.2e} (tol 1e-8), eigenvalue distance to oracle {:.2e}, \
             ||M - diag(1,0,1)|| {m_dist:.2e} (tol 1e-3)",
            r.measurement_residual, r.oracle_distance
        ),
    )
}

fn fig3_classification() -> Result<String, String> {
    let res = load_preset("fig3-classification").map_err(|e| e.to_string())?;
    let f = res.config.flow();
    if f.steps != 2_000_000 || f.step != 5e-4 {
        return Err(format!("preset runs {} steps of {}", f.steps, f.step));
    }
    let report = compare(&res);
    let mut loss_ok = true;
    let mut trend_ok = true;
    let mut parts = Vec::new();
    for e in &res.config.experiments {
        for &alpha in &f.alphas {
            let r = run_report(&report, &e.label, alpha);
            loss_ok &= r.final_loss <= 1e-5;
            let k = r.kkt_residuals.clone().unwrap_or_default();
            let judged = matches!(e.check, linbias_cli::config::Check::KktTrend { .. });
            let non_increasing = k.len() == 3 && k.windows(2).all(|w| w[1] <= w[0]);
            if judged {
                trend_ok &= non_increasing;
            }
            parts.push(format!(
                "{} a={alpha} loss {:.2e} kkt {}{}",
                e.label,
                r.final_loss,
                sci(&k),
                if judged { "" } else { " (reported only)" }
            ));
        }
    }
    verdict(
        loss_ok && trend_ok,
        format!(
            "loss <= 1e-5: {loss_ok}, KKT trend non-increasing: {trend_ok}; {}",
            parts.join("; ")
        ),
    )
}
