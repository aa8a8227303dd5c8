//! JSON problem and experiment configuration.
//!
//! A problem document has the keys `A`, `B`, `Q`, `R`, `N`, `epsilon`,
//! `delta`, `Cx`, `dx`, `Cu`, `du`. Matrices are arrays of rows; a bare
//! number is a 1×1 matrix and a flat array of numbers is a column. An
//! experiment document wraps a problem under `problem` (or points to one with
//! `problem_file`) and adds the simulation knobs; see [`ExperimentConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::linesearch::{LineSearchConfig, Method};
use crate::model::{PlantModel, Polytope, ProblemSetup};
use crate::scheme::{InitMode, IterationSchedule};

/// Initial conditions of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialStates {
    List(Vec<DVector<f64>>),
    /// Uniform samples from the box `[lower, upper]`, rejected until they lie
    /// in the state constraint set. Missing bounds default to the bounding
    /// box of that set.
    Random {
        count: usize,
        seed: u64,
        lower: Option<Vec<f64>>,
        upper: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSetup<f64>,
    pub x0: InitialStates,
    pub init_mode: InitMode,
    pub schedule: IterationSchedule,
    pub ls: LineSearchConfig<f64>,
    pub sim_steps: usize,
    pub methods: Vec<Method>,
    pub certificates: bool,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Benchmark defaults: `x₀ = (2.5, -0.65)`, gain-rollout start, Newton,
    /// one update per step, 600 steps.
    pub fn new(problem: ProblemSetup<f64>) -> Self {
        let n = problem.n();
        let x0 = if n == 2 {
            DVector::from_row_slice(&[2.5, -0.65])
        } else {
            DVector::zeros(n)
        };
        Self {
            problem,
            x0: InitialStates::List(vec![x0]),
            init_mode: InitMode::GainRollout,
            schedule: IterationSchedule::Fixed(1),
            ls: LineSearchConfig::new(Method::Newton),
            sim_steps: 600,
            methods: Method::ALL.to_vec(),
            certificates: true,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sim_steps == 0 {
            return Err(Error::config("sim_steps", None, "must be at least 1"));
        }
        self.ls.validate()?;
        let n = self.problem.n();
        match &self.x0 {
            InitialStates::List(list) => {
                if list.is_empty() {
                    return Err(Error::config("x0", None, "no initial states given"));
                }
                for (i, x) in list.iter().enumerate() {
                    if x.len() != n {
                        return Err(Error::config("x0", Some(i), format!("expected {n} entries, found {}", x.len())));
                    }
                }
            }
            InitialStates::Random { lower, upper, .. } => {
                for (key, b) in [("x0.lower", lower), ("x0.upper", upper)] {
                    if let Some(b) = b {
                        if b.len() != n {
                            return Err(Error::config(key, None, format!("expected {n} entries, found {}", b.len())));
                        }
                    }
                }
            }
        }
        if let IterationSchedule::PerStep(list) = &self.schedule {
            if list.is_empty() {
                return Err(Error::config("schedule", None, "list must not be empty"));
            }
        }
        Ok(())
    }
}

fn number(v: &Value, key: &str, row: Option<usize>) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::config(key, row, format!("expected a finite number, found {v}")))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::config(key, None, "missing"))
}

pub fn parse_matrix(v: &Value, key: &str) -> Result<DMatrix<f64>> {
    match v {
        Value::Number(_) => Ok(DMatrix::from_element(1, 1, number(v, key, None)?)),
        Value::Array(rows) if rows.is_empty() => Err(Error::config(key, None, "empty matrix")),
        Value::Array(rows) if rows.iter().all(|r| !r.is_array()) => {
            let vals = rows
                .iter()
                .enumerate()
                .map(|(i, r)| number(r, key, Some(i)))
                .collect::<Result<Vec<_>>>()?;
            Ok(DMatrix::from_column_slice(vals.len(), 1, &vals))
        }
        Value::Array(rows) => {
            let mut data = Vec::new();
            let mut width = None;
            for (i, r) in rows.iter().enumerate() {
                let Value::Array(items) = r else {
                    return Err(Error::config(key, Some(i), "expected an array row"));
                };
                if *width.get_or_insert(items.len()) != items.len() {
                    return Err(Error::config(
                        key,
                        Some(i),
                        format!("row has {} entries, expected {}", items.len(), width.unwrap_or(0)),
                    ));
                }
                for item in items {
                    data.push(number(item, key, Some(i))?);
                }
            }
            let cols = width.unwrap_or(0);
            if cols == 0 {
                return Err(Error::config(key, Some(0), "empty row"));
            }
            Ok(DMatrix::from_row_slice(rows.len(), cols, &data))
        }
        other => Err(Error::config(key, None, format!("expected a matrix, found {other}"))),
    }
}

pub fn parse_vector(v: &Value, key: &str) -> Result<DVector<f64>> {
    match v {
        Value::Number(_) => Ok(DVector::from_element(1, number(v, key, None)?)),
        Value::Array(items) => {
            let vals = items
                .iter()
                .enumerate()
                .map(|(i, r)| number(r, key, Some(i)))
                .collect::<Result<Vec<_>>>()?;
            if vals.is_empty() {
                return Err(Error::config(key, None, "empty vector"));
            }
            Ok(DVector::from_vec(vals))
        }
        other => Err(Error::config(key, None, format!("expected a vector, found {other}"))),
    }
}

fn count(v: &Value, key: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::config(key, None, format!("expected a nonnegative integer, found {v}")))
}

fn shape_check(m: &DMatrix<f64>, rows: usize, cols: usize, key: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::config(
            key,
            None,
            format!("expected {rows}x{cols}, found {}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// Reads a problem from a JSON object.
pub fn parse_problem(v: &Value) -> Result<ProblemSetup<f64>> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::config("problem", None, "expected an object"))?;
    let a = parse_matrix(field(obj, "A")?, "A")?;
    let n = a.nrows();
    shape_check(&a, n, n, "A")?;
    let b = parse_matrix(field(obj, "B")?, "B")?;
    if b.nrows() != n {
        return Err(Error::config("B", None, format!("expected {n} rows, found {}", b.nrows())));
    }
    let m = b.ncols();
    let q = parse_matrix(field(obj, "Q")?, "Q")?;
    shape_check(&q, n, n, "Q")?;
    let r = parse_matrix(field(obj, "R")?, "R")?;
    shape_check(&r, m, m, "R")?;
    let cx = parse_matrix(field(obj, "Cx")?, "Cx")?;
    if cx.ncols() != n {
        return Err(Error::config("Cx", None, format!("expected {n} columns, found {}", cx.ncols())));
    }
    let dx = parse_vector(field(obj, "dx")?, "dx")?;
    if dx.len() != cx.nrows() {
        return Err(Error::config("dx", None, format!("expected {} entries, found {}", cx.nrows(), dx.len())));
    }
    let cu = parse_matrix(field(obj, "Cu")?, "Cu")?;
    if cu.ncols() != m {
        return Err(Error::config("Cu", None, format!("expected {m} columns, found {}", cu.ncols())));
    }
    let du = parse_vector(field(obj, "du")?, "du")?;
    if du.len() != cu.nrows() {
        return Err(Error::config("du", None, format!("expected {} entries, found {}", cu.nrows(), du.len())));
    }
    let horizon = count(field(obj, "N")?, "N")?;
    let epsilon = number(field(obj, "epsilon")?, "epsilon", None)?;
    let delta = number(field(obj, "delta")?, "delta", None)?;
    Ok(ProblemSetup {
        plant: PlantModel::new(a, b)?,
        state_set: Polytope::new(cx, dx)?,
        input_set: Polytope::new(cu, du)?,
        q,
        r,
        horizon,
        epsilon,
        delta,
    })
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        m.row_iter()
            .map(|r| Value::Array(r.iter().map(|v| Value::from(*v)).collect()))
            .collect(),
    )
}

/// Inverse of [`parse_problem`].
pub fn problem_to_json(p: &ProblemSetup<f64>) -> Value {
    let vec = |v: &DVector<f64>| Value::Array(v.iter().map(|x| Value::from(*x)).collect());
    serde_json::json!({
        "A": matrix_json(p.plant.a()),
        "B": matrix_json(p.plant.b()),
        "Q": matrix_json(&p.q),
        "R": matrix_json(&p.r),
        "N": p.horizon,
        "epsilon": p.epsilon,
        "delta": p.delta,
        "Cx": matrix_json(p.state_set.c()),
        "dx": vec(p.state_set.d()),
        "Cu": matrix_json(p.input_set.c()),
        "du": vec(p.input_set.d()),
    })
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_initial_states(v: &Value) -> Result<InitialStates> {
    if let Some(obj) = v.as_object() {
        let spec = obj.get("random").and_then(Value::as_object).unwrap_or(obj);
        let n = count(field(spec, "count")?, "x0.count")?;
        let seed = field(spec, "seed")?
            .as_u64()
            .ok_or_else(|| Error::config("x0.seed", None, "expected a nonnegative integer"))?;
        let bound = |key: &str, label: &str| -> Result<Option<Vec<f64>>> {
            spec.get(key)
                .map(|b| parse_vector(b, label).map(|v| v.iter().copied().collect()))
                .transpose()
        };
        return Ok(InitialStates::Random {
            count: n,
            seed,
            lower: bound("lower", "x0.lower")?,
            upper: bound("upper", "x0.upper")?,
        });
    }
    let Value::Array(items) = v else {
        return Err(Error::config("x0", None, "expected a state, a list of states or a random sampler"));
    };
    if items.iter().all(|i| i.is_number()) {
        return Ok(InitialStates::List(vec![parse_vector(v, "x0")?]));
    }
    let mut list = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let Value::Array(vals) = item else {
            return Err(Error::config("x0", Some(i), "expected a state vector"));
        };
        let vals = vals.iter().map(|x| number(x, "x0", Some(i))).collect::<Result<Vec<_>>>()?;
        list.push(DVector::from_vec(vals));
    }
    Ok(InitialStates::List(list))
}

fn parse_schedule(v: &Value) -> Result<IterationSchedule> {
    match v {
        Value::Number(_) => Ok(IterationSchedule::Fixed(count(v, "schedule")?)),
        Value::Array(items) => Ok(IterationSchedule::PerStep(
            items.iter().map(|i| count(i, "schedule")).collect::<Result<Vec<_>>>()?,
        )),
        Value::String(s) => s.parse().map_err(|e: String| Error::config("schedule", None, e)),
        other => Err(Error::config("schedule", None, format!("expected an integer or list, found {other}"))),
    }
}

fn parse_method(v: &Value, key: &str) -> Result<Method> {
    v.as_str()
        .ok_or_else(|| Error::config(key, None, "expected a string"))?
        .parse()
        .map_err(|e: String| Error::config(key, None, e))
}

/// Parses an experiment document; relative `problem_file` and `out_dir`
/// paths resolve against `base`.
pub fn parse_experiment(v: &Value, base: &Path) -> Result<ExperimentConfig> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::config("<root>", None, "expected an object"))?;
    let problem = if let Some(p) = obj.get("problem") {
        parse_problem(p)?
    } else if let Some(file) = obj.get("problem_file") {
        let rel = file
            .as_str()
            .ok_or_else(|| Error::config("problem_file", None, "expected a path string"))?;
        parse_problem(&read_json(&base.join(rel))?)?
    } else {
        parse_problem(v)?
    };
    let mut cfg = ExperimentConfig::new(problem);
    if let Some(x0) = obj.get("x0") {
        cfg.x0 = parse_initial_states(x0)?;
    }
    if let Some(mode) = obj.get("init") {
        cfg.init_mode = mode
            .as_str()
            .ok_or_else(|| Error::config("init", None, "expected a string"))?
            .parse()
            .map_err(|e: String| Error::config("init", None, e))?;
    }
    if let Some(s) = obj.get("schedule") {
        cfg.schedule = parse_schedule(s)?;
    }
    if let Some(m) = obj.get("method") {
        cfg.ls.method = parse_method(m, "method")?;
    }
    if let Some(ls) = obj.get("line_search") {
        let ls = ls
            .as_object()
            .ok_or_else(|| Error::config("line_search", None, "expected an object"))?;
        for (key, slot) in [
            ("c1", &mut cfg.ls.c1),
            ("c2", &mut cfg.ls.c2),
            ("rho", &mut cfg.ls.rho),
            ("s_init", &mut cfg.ls.s_init),
        ] {
            if let Some(v) = ls.get(key) {
                *slot = number(v, &format!("line_search.{key}"), None)?;
            }
        }
        if let Some(v) = ls.get("max_ls_iters") {
            cfg.ls.max_ls_iters = count(v, "line_search.max_ls_iters")?;
        }
    }
    if let Some(s) = obj.get("sim_steps") {
        cfg.sim_steps = count(s, "sim_steps")?;
    }
    if let Some(Value::Array(ms)) = obj.get("methods") {
        cfg.methods = ms.iter().map(|m| parse_method(m, "methods")).collect::<Result<Vec<_>>>()?;
    }
    if let Some(c) = obj.get("certificates") {
        cfg.certificates = c
            .as_bool()
            .ok_or_else(|| Error::config("certificates", None, "expected a boolean"))?;
    }
    if let Some(dir) = obj.get("out_dir") {
        let dir = dir
            .as_str()
            .ok_or_else(|| Error::config("out_dir", None, "expected a path string"))?;
        cfg.out_dir = Some(base.join(dir));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let v = read_json(path)?;
    parse_experiment(&v, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn benchmark_round_trips() {
        let p = ProblemSetup::<f64>::double_integrator();
        assert_eq!(parse_problem(&problem_to_json(&p)).unwrap(), p);
    }

    #[test]
    fn scalars_and_columns_are_promoted() {
        assert_eq!(parse_matrix(&json!(0.1), "R").unwrap().shape(), (1, 1));
        assert_eq!(parse_matrix(&json!([0.01, 0.1]), "B").unwrap().shape(), (2, 1));
    }

    #[test]
    fn errors_name_key_and_row() {
        let err = parse_matrix(&json!([[1.0, 0.0], [1.0]]), "A").unwrap_err();
        match err {
            Error::Config { key, row, .. } => {
                assert_eq!(key, "A");
                assert_eq!(row, Some(1));
            }
            other => panic!("{other}"),
        }
        let mut doc = problem_to_json(&ProblemSetup::double_integrator());
        doc.as_object_mut().unwrap().remove("dx");
        assert!(parse_problem(&doc).unwrap_err().to_string().contains("`dx`"));
    }

    #[test]
    fn experiment_knobs() {
        let doc = json!({
            "problem": problem_to_json(&ProblemSetup::double_integrator()),
            "x0": {"random": {"count": 5, "seed": 7}},
            "init": "optimal",
            "schedule": [1, 10],
            "method": "qn",
            "line_search": {"c1": 1e-4},
            "sim_steps": 20,
        });
        let cfg = parse_experiment(&doc, Path::new(".")).unwrap();
        assert_eq!(cfg.init_mode, InitMode::Optimal);
        assert_eq!(cfg.schedule, IterationSchedule::PerStep(vec![1, 10]));
        assert_eq!(cfg.ls.method, Method::QuasiNewton);
        assert_eq!(cfg.ls.c1, 1e-4);
        assert!(matches!(cfg.x0, InitialStates::Random { count: 5, seed: 7, .. }));
        let bad = json!({"problem": problem_to_json(&ProblemSetup::double_integrator()), "sim_steps": 0});
        assert!(parse_experiment(&bad, Path::new(".")).is_err());
    }
}
