//! Closed-loop simulation, batch experiments and their CSV/JSON output.
//!
//! Random initial states are drawn with `ChaCha8Rng::seed_from_u64(seed)`,
//! uniformly from a box (by default the bounding box of the state set) and
//! rejected until they lie in the state set, so a seed fixes the sample.
//! Batches run in parallel with results collected in input order, so output
//! does not depend on the thread count.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::certify::certificate;
use crate::config::{ExperimentConfig, InitialStates};
use crate::error::{Error, Result};
use crate::linesearch::{LineSearchConfig, Method};
use crate::model::ProblemSetup;
use crate::mpc::MpcProblem;
use crate::scalar::Real;
use crate::scheme::{controller_step, initialize, InitMode, InnerStep, IterationSchedule};

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// `‖x‖` at or below which a trajectory counts as settled.
pub const SETTLED_NORM: f64 = 1e-3;

/// One sampling instant of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub k: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// `Ĵ(U(k), x(k))`.
    pub cost: f64,
    /// Gradient norm after the inner updates, at the predicted state.
    pub grad_norm: f64,
    pub alpha_hat: f64,
    /// Empty when certificates are switched off.
    pub zx: Vec<f64>,
    pub zu: Vec<f64>,
    pub ls_iters: usize,
    pub gamma: f64,
    pub inner: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub x0: Vec<f64>,
    pub method: Method,
    pub init_mode: InitMode,
    pub schedule: IterationSchedule,
    pub rows: Vec<LogRow>,
}

/// Settings shared by every trajectory of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub init_mode: InitMode,
    pub schedule: IterationSchedule,
    pub ls: LineSearchConfig<f64>,
    pub steps: usize,
    pub certificates: bool,
    /// Ends the run after the first instant whose cost is at or below this.
    pub stop_cost: Option<f64>,
}

impl RunSpec {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            init_mode: cfg.init_mode,
            schedule: cfg.schedule.clone(),
            ls: cfg.ls,
            steps: cfg.sim_steps,
            certificates: cfg.certificates,
            stop_cost: None,
        }
    }
}

fn to_vec<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

impl TrajectoryLog {
    pub fn costs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cost).collect()
    }

    /// Largest increase `Ĵ(k+1) - Ĵ(k)` along the run.
    pub fn max_cost_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].cost - w[0].cost)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// First `k` from which `‖x‖ ≤ 1e-3` holds for the rest of the run.
    pub fn settled_step(&self) -> Option<usize> {
        let norm = |r: &LogRow| r.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let last_out = self.rows.iter().rposition(|r| norm(r) > SETTLED_NORM);
        match last_out {
            None => Some(0),
            Some(i) if i + 1 < self.rows.len() => Some(self.rows[i + 1].k),
            Some(_) => None,
        }
    }

    /// Largest entry of `C_x x(k) - d_x` and `C_u u(k) - d_u` over the run.
    pub fn max_violation(&self, setup: &ProblemSetup<f64>) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let vx = setup.state_set.violation(&DVector::from_row_slice(&r.x));
                let vu = setup.input_set.violation(&DVector::from_row_slice(&r.u));
                vx.max(vu)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn csv_header(&self) -> Vec<String> {
        let n = self.x0.len();
        let m = self.rows.first().map_or(0, |r| r.u.len());
        let qx = self.rows.first().map_or(0, |r| r.zx.len());
        let qu = self.rows.first().map_or(0, |r| r.zu.len());
        let mut h = vec!["k".to_string()];
        h.extend((1..=n).map(|i| format!("x_{i}")));
        h.extend((1..=m).map(|i| format!("u_{i}")));
        h.extend(["cost", "grad_norm", "alpha_hat"].map(String::from));
        h.extend((1..=qx).map(|i| format!("zx_{i}")));
        h.extend((1..=qu).map(|i| format!("zu_{i}")));
        h.extend(["ls_iters", "gamma", "zx_max", "zu_max"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.csv_header().join(","))?;
        let fmax = |v: &[f64]| {
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        };
        for r in &self.rows {
            let mut fields = vec![r.k.to_string()];
            fields.extend(r.x.iter().chain(&r.u).map(|v| v.to_string()));
            fields.extend([r.cost, r.grad_norm, r.alpha_hat].map(|v| v.to_string()));
            fields.extend(r.zx.iter().chain(&r.zu).map(|v| v.to_string()));
            fields.push(r.ls_iters.to_string());
            fields.extend([r.gamma, fmax(&r.zx), fmax(&r.zu)].map(|v| v.to_string()));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn summary(&self, setup: &ProblemSetup<f64>) -> Value {
        json!({
            "x0": self.x0,
            "method": self.method.label(),
            "init": self.init_mode.label(),
            "schedule": self.schedule.to_string(),
            "steps": self.rows.len(),
            "initial_cost": self.rows.first().map(|r| r.cost),
            "final_cost": self.rows.last().map(|r| r.cost),
            "max_cost_increase": finite_or_null(self.max_cost_increase()),
            "max_violation": finite_or_null(self.max_violation(setup)),
            "settled_step": self.settled_step(),
        })
    }
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Runs the closed loop `x(k+1) = Ax(k) + Bu(k)` for `spec.steps` instants.
pub fn simulate_trajectory<T: Real>(problem: &MpcProblem<T>, x0: &DVector<T>, spec: &RunSpec) -> Result<TrajectoryLog> {
    let ls = LineSearchConfig {
        method: spec.ls.method,
        c1: T::lit(spec.ls.c1),
        c2: T::lit(spec.ls.c2),
        rho: T::lit(spec.ls.rho),
        s_init: T::lit(spec.ls.s_init),
        max_ls_iters: spec.ls.max_ls_iters,
    };
    let mut state = initialize(spec.init_mode, x0, problem)?;
    let mut x = x0.clone();
    let mut rows = Vec::with_capacity(spec.steps);
    for k in 0..spec.steps {
        let cost = problem.cp.eval_cost(&state.u, &x);
        let (alpha, zx, zu) = if spec.certificates {
            let c = certificate(problem, &state.u, &x, k);
            (c.alpha_hat.as_f64(), to_vec(&c.zx), to_vec(&c.zu))
        } else {
            let a = crate::certify::alpha_hat(&problem.cp, &problem.terminal.p_uc, &state.u, &x);
            (a.as_f64(), Vec::new(), Vec::new())
        };
        let report = controller_step(problem, &mut state, &x, spec.schedule.iterations_at(k), &ls)?;
        rows.push(LogRow {
            k,
            x: to_vec(&x),
            u: to_vec(&report.u),
            cost: cost.as_f64(),
            grad_norm: report.grad_norm.as_f64(),
            alpha_hat: alpha,
            zx,
            zu,
            ls_iters: report.ls_iters,
            gamma: report.gamma.as_f64(),
            inner: report
                .inner
                .iter()
                .map(|InnerStep { s, ls_iters }| (s.as_f64(), *ls_iters))
                .collect(),
        });
        x = report.x_next;
        if spec.stop_cost.is_some_and(|c| cost.as_f64() <= c) {
            break;
        }
    }
    Ok(TrajectoryLog {
        x0: to_vec(x0),
        method: spec.ls.method,
        init_mode: spec.init_mode,
        schedule: spec.schedule.clone(),
        rows,
    })
}

/// One trajectory per initial state, in parallel; order follows `x0s`.
pub fn simulate_batch(problem: &MpcProblem<f64>, x0s: &[DVector<f64>], spec: &RunSpec) -> Result<Vec<TrajectoryLog>> {
    x0s.par_iter()
        .map(|x0| simulate_trajectory(problem, x0, spec))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Seeded uniform samples from `[lower, upper]` that lie in the state set.
pub fn sample_initial_states(
    setup: &ProblemSetup<f64>,
    count: usize,
    seed: u64,
    lower: Option<&[f64]>,
    upper: Option<&[f64]>,
) -> Result<Vec<DVector<f64>>> {
    let (box_lo, box_hi) = setup.state_set.bounding_box()?;
    let lo = lower.map_or(box_lo, <[f64]>::to_vec);
    let hi = upper.map_or(box_hi, <[f64]>::to_vec);
    if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
        return Err(Error::config("x0", None, "sampling box needs lower < upper"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let max_draws = 1_000_000usize.max(count * 1000);
    let mut draws = 0;
    while out.len() < count {
        if draws == max_draws {
            return Err(Error::config("x0", None, "sampling box barely intersects the state set"));
        }
        draws += 1;
        let x = DVector::from_iterator(lo.len(), lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..*h)));
        if setup.state_set.contains(&x, 0.0) {
            out.push(x);
        }
    }
    Ok(out)
}

pub fn initial_states(cfg: &ExperimentConfig) -> Result<Vec<DVector<f64>>> {
    match &cfg.x0 {
        InitialStates::List(list) => Ok(list.clone()),
        InitialStates::Random {
            count,
            seed,
            lower,
            upper,
        } => sample_initial_states(&cfg.problem, *count, *seed, lower.as_deref(), upper.as_deref()),
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<TrajectoryLog>> {
    let problem = MpcProblem::build(cfg.problem.clone())?;
    simulate_batch(&problem, &initial_states(cfg)?, &RunSpec::from_config(cfg))
}

/// Mean of the cost columns, index by index.
pub fn mean_cost_curve(logs: &[TrajectoryLog]) -> Vec<f64> {
    let len = logs.iter().map(|l| l.rows.len()).min().unwrap_or(0);
    (0..len)
        .map(|k| logs.iter().map(|l| l.rows[k].cost).sum::<f64>() / logs.len() as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurve {
    pub label: String,
    pub mean_cost: Vec<f64>,
    pub mean_settled: Option<f64>,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSummary {
    pub samples: usize,
    pub seed: u64,
    pub curves: Vec<MeanCurve>,
}

impl ComparisonSummary {
    pub fn curve(&self, label: &str) -> Option<&MeanCurve> {
        self.curves.iter().find(|c| c.label == label)
    }

    /// Columns `k` then one mean-cost column per curve.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let labels: Vec<&str> = self.curves.iter().map(|c| c.label.as_str()).collect();
        writeln!(w, "k,{}", labels.join(","))?;
        let len = self.curves.iter().map(|c| c.mean_cost.len()).min().unwrap_or(0);
        for k in 0..len {
            let vals: Vec<String> = self.curves.iter().map(|c| c.mean_cost[k].to_string()).collect();
            writeln!(w, "{k},{}", vals.join(","))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema_version": CSV_SCHEMA_VERSION,
            "samples": self.samples,
            "seed": self.seed,
            "curves": self.curves.iter().map(|c| json!({
                "label": c.label,
                "mean_settled_step": c.mean_settled,
                "max_violation": finite_or_null(c.max_violation),
                "mean_cost_k20": c.mean_cost.get(20),
                "mean_cost_k50": c.mean_cost.get(50),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Labelled batch settings for [`compare_runs`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub label: String,
    pub run: RunSpec,
}

pub fn compare_runs(
    problem: &MpcProblem<f64>,
    x0s: &[DVector<f64>],
    specs: &[CurveSpec],
    seed: u64,
) -> Result<ComparisonSummary> {
    let mut curves = Vec::with_capacity(specs.len());
    for spec in specs {
        let logs = simulate_batch(problem, x0s, &spec.run)?;
        let settled: Vec<f64> = logs.iter().filter_map(|l| l.settled_step()).map(|k| k as f64).collect();
        curves.push(MeanCurve {
            label: spec.label.clone(),
            mean_cost: mean_cost_curve(&logs),
            mean_settled: (settled.len() == logs.len() && !settled.is_empty())
                .then(|| settled.iter().sum::<f64>() / settled.len() as f64),
            max_violation: logs
                .iter()
                .map(|l| l.max_violation(&problem.setup))
                .fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(ComparisonSummary {
        samples: x0s.len(),
        seed,
        curves,
    })
}

/// Mean cost curves of `methods` from `n_samples` seeded random states in the
/// state set, plus a shift-only curve labelled `shift`.
pub fn compare_methods(
    cfg: &ExperimentConfig,
    methods: &[Method],
    n_samples: usize,
    seed: u64,
) -> Result<ComparisonSummary> {
    let problem = MpcProblem::build(cfg.problem.clone())?;
    let x0s = sample_initial_states(&cfg.problem, n_samples, seed, None, None)?;
    let base = RunSpec {
        certificates: false,
        ..RunSpec::from_config(cfg)
    };
    let mut specs: Vec<CurveSpec> = methods
        .iter()
        .map(|m| CurveSpec {
            label: m.label().to_string(),
            run: RunSpec {
                ls: base.ls.with_method(*m),
                ..base.clone()
            },
        })
        .collect();
    specs.push(CurveSpec {
        label: "shift".into(),
        run: RunSpec {
            schedule: IterationSchedule::Fixed(0),
            ..base.clone()
        },
    });
    compare_runs(&problem, &x0s, &specs, seed)
}

/// Writes one `traj_XXXX.csv` per log plus `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, logs: &[TrajectoryLog]) -> Result<()> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, log) in logs.iter().enumerate() {
        let path = dir.join(format!("traj_{i:04}.csv"));
        let mut buf = Vec::new();
        log.write_csv(&mut buf).map_err(io_err(&path))?;
        fs::write(&path, buf).map_err(io_err(&path))?;
    }
    let summary = json!({
        "schema_version": CSV_SCHEMA_VERSION,
        "method": cfg.ls.method.label(),
        "init": cfg.init_mode.label(),
        "schedule": cfg.schedule.to_string(),
        "sim_steps": cfg.sim_steps,
        "trajectories": logs.iter().map(|l| l.summary(&cfg.problem)).collect::<Vec<_>>(),
    });
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(())
}

pub fn write_comparison(dir: &Path, summary: &ComparisonSummary) -> Result<()> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("compare.csv");
    let mut buf = Vec::new();
    summary.write_csv(&mut buf).map_err(io_err(&path))?;
    fs::write(&path, buf).map_err(io_err(&path))?;
    let path = dir.join("compare.json");
    let text = serde_json::to_string_pretty(&summary.to_json()).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_seeded_and_inside() {
        let s = ProblemSetup::<f64>::double_integrator();
        let a = sample_initial_states(&s, 20, 3, None, None).unwrap();
        let b = sample_initial_states(&s, 20, 3, None, None).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| s.state_set.contains(x, 0.0)));
        assert_ne!(a, sample_initial_states(&s, 20, 4, None, None).unwrap());
    }

    #[test]
    fn bounding_box_of_benchmark() {
        let s = ProblemSetup::<f64>::double_integrator();
        let (lo, hi) = s.state_set.bounding_box().unwrap();
        assert_eq!(lo, vec![-2.0, -1.0]);
        assert_eq!(hi, vec![3.0, 1.0]);
    }

    #[test]
    fn header_layout() {
        let p = MpcProblem::build(ProblemSetup::double_integrator()).unwrap();
        let spec = RunSpec::from_config(&ExperimentConfig::new(p.setup.clone()));
        let log = simulate_trajectory(&p, &DVector::zeros(2), &RunSpec { steps: 2, ..spec }).unwrap();
        let h = log.csv_header();
        assert_eq!(h.len(), 1 + 2 + 1 + 3 + 4 + 2 + 2 + 2);
        assert_eq!(h[4], "cost");
        assert_eq!(h.last().unwrap(), "zu_max");
        assert!(log.rows.iter().all(|r| r.x == vec![0.0, 0.0] && r.u == vec![0.0]));
    }
}
