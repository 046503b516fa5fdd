//! Run configuration: a flat `key=value` file with dotted section prefixes,
//! plus single-column CSV inputs for histories and `x1`.
//!
//! ```text
//! # AK reference
//! model.kind=ak
//! model.a=0.3
//! model.R=1
//! model.rho=0.05
//! model.h=crra:2
//! model.phi=linear:-1
//! grid.nR=10
//! grid.T=2
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::convex::ConvexScalarFn;
use crate::error::{Error, Result};
use crate::model::{ControlGrid, Grid, InitialTriple, ModelSpec};
use crate::structural::M2Point;
use crate::value::{ConstraintMode, ObjectiveSpec, DEFAULT_BETAS};

const KNOWN_KEYS: &[&str] = &[
    "model.kind",
    "model.a",
    "model.R",
    "model.rho",
    "model.a0",
    "model.a1",
    "model.b0",
    "model.b1",
    "model.h",
    "model.sigma",
    "model.phi",
    "grid.nR",
    "grid.nT",
    "grid.t",
    "grid.T",
    "solver.tol",
    "solver.maxIter",
    "solver.beta",
    "solver.mode",
    "solver.n",
    "control.c",
    "init.phi0",
    "x.x0",
    "check.samples",
    "check.splits",
    "check.bump",
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub grid: Grid,
    pub running: ConvexScalarFn,
    pub terminal: ConvexScalarFn,
    pub tol: f64,
    pub max_iter: usize,
    pub constraint_mode: ConstraintMode,
    /// Penalization indices for value sweeps.
    pub ns: Vec<f64>,
    /// Either one constant or one value per step.
    pub control: Vec<f64>,
    pub phi0: Option<f64>,
    pub x0: Option<f64>,
    pub samples: usize,
    pub splits: Vec<usize>,
    pub bump: Option<f64>,
}

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                key: body.to_string(),
                msg: "expected key=value".into(),
            })?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config {
                    line,
                    key,
                    msg: "unknown key".into(),
                });
            }
            if let Some((first, _)) = map.get(&key) {
                return Err(Error::Config {
                    line,
                    key,
                    msg: format!("duplicate key (first set on line {first})"),
                });
            }
            map.insert(key, (line, value.trim().to_string()));
        }
        Ok(Self(map))
    }

    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |(l, _)| *l)
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::Config {
            line: self.line(key),
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|(_, v)| v.as_str())
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key).ok_or_else(|| self.err(key, "missing required key"))
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.err(key, format!("expected a finite number, got '{v}'")))
            })
            .transpose()
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        self.raw(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| self.err(key, format!("expected a nonnegative integer, got '{v}'")))
            })
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| self.err(key, format!("bad list entry '{}'", s.trim())))
                    })
                    .collect()
            })
            .transpose()
    }

    fn function(&self, key: &str) -> Result<Option<ConvexScalarFn>> {
        self.raw(key)
            .map(|v| parse_fn_tag(v).map_err(|msg| self.err(key, msg)))
            .transpose()
    }
}

/// `crra:2`, `log`, `quadratic:1,-2`, `linear:-1`, `abs`, `indicator`.
pub fn parse_fn_tag(text: &str) -> std::result::Result<ConvexScalarFn, String> {
    let (name, args) = match text.split_once(':') {
        Some((n, a)) => (n.trim(), a.trim()),
        None => (text.trim(), ""),
    };
    let nums: Vec<f64> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad argument '{s}'")))
            .collect::<std::result::Result<_, _>>()?
    };
    let arity = |n: usize| {
        if nums.len() == n {
            Ok(())
        } else {
            Err(format!("{name} takes {n} argument(s), got {}", nums.len()))
        }
    };
    let f = match name {
        "crra" => {
            arity(1)?;
            ConvexScalarFn::crra(nums[0])
        }
        "log" => {
            arity(0)?;
            ConvexScalarFn::Log
        }
        "quadratic" => {
            arity(2)?;
            ConvexScalarFn::quadratic(nums[0], nums[1])
        }
        "linear" => {
            arity(1)?;
            ConvexScalarFn::Linear { slope: nums[0] }
        }
        "abs" => {
            arity(0)?;
            ConvexScalarFn::Abs
        }
        "indicator" => {
            arity(0)?;
            ConvexScalarFn::IndicatorNonneg
        }
        other => return Err(format!("unknown function tag '{other}'")),
    };
    f.validate().map_err(|e| e.to_string())?;
    Ok(f)
}

fn density(entries: &Entries, key: &str, n_r: usize) -> Result<Vec<f64>> {
    match entries.list(key)? {
        None => Ok(Vec::new()),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; n_r + 1]),
        Some(v) if v.len() == n_r + 1 => Ok(v),
        Some(v) => Err(entries.err(key, format!("expected 1 or {} values, got {}", n_r + 1, v.len()))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let e = Entries::parse(text)?;
        let n_r = e.count("grid.nR")?.ok_or_else(|| e.err("grid.nR", "missing required key"))?;
        let delay = e.number("model.R")?.ok_or_else(|| e.err("model.R", "missing required key"))?;
        let rho = e.number("model.rho")?.unwrap_or(0.0);
        let model = match e.required("model.kind")? {
            "ak" => {
                let a = e.number("model.a")?.ok_or_else(|| e.err("model.a", "missing required key"))?;
                ModelSpec::ak(a, delay, rho)
            }
            "advertising" => ModelSpec::advertising(
                e.number("model.a0")?.unwrap_or(0.0),
                density(&e, "model.a1", n_r)?,
                e.number("model.b0")?.unwrap_or(0.0),
                density(&e, "model.b1", n_r)?,
                delay,
                rho,
            ),
            other => return Err(e.err("model.kind", format!("expected 'ak' or 'advertising', got '{other}'"))),
        };
        let key_of = |err: &Error| match err {
            Error::InvalidModel(m) if m.contains("delay") => "model.R",
            Error::InvalidModel(m) if m.contains("rho") => "model.rho",
            _ => "model.kind",
        };
        model.validate(n_r).map_err(|err| e.err(key_of(&err), err.to_string()))?;

        let t0 = e.number("grid.t")?.unwrap_or(0.0);
        let grid = match (e.count("grid.nT")?, e.number("grid.T")?) {
            (Some(n_t), None) => Grid::new(t0, delay, n_r, n_t),
            (None, Some(t_end)) => Grid::spanning(t0, t_end, delay, n_r),
            (Some(n_t), Some(t_end)) => {
                let g = Grid::new(t0, delay, n_r, n_t).map_err(|err| e.err("grid.nT", err.to_string()))?;
                if (g.horizon() - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
                    return Err(e.err("grid.T", format!("inconsistent with grid.nT (horizon {})", g.horizon())));
                }
                Ok(g)
            }
            (None, None) => return Err(e.err("grid.nT", "missing: give grid.nT or grid.T")),
        }
        .map_err(|err| e.err("grid.nR", err.to_string()))?;

        let running = match (e.function("model.h")?, e.number("model.sigma")?) {
            (Some(_), Some(_)) => return Err(e.err("model.sigma", "conflicts with model.h")),
            (Some(h), None) => h,
            (None, Some(s)) => {
                let h = ConvexScalarFn::crra(s);
                h.validate().map_err(|err| e.err("model.sigma", err.to_string()))?;
                h
            }
            (None, None) => ConvexScalarFn::quadratic(1.0, 0.0),
        };
        let terminal = e.function("model.phi")?.unwrap_or(ConvexScalarFn::Linear { slope: 0.0 });
        if !matches!(
            terminal,
            ConvexScalarFn::Quadratic { .. } | ConvexScalarFn::Linear { .. }
        ) {
            return Err(e.err("model.phi", "terminal cost must be linear or quadratic"));
        }

        let tol = e.number("solver.tol")?.unwrap_or(1e-8);
        if !(tol > 0.0) {
            return Err(e.err("solver.tol", "must be positive"));
        }
        let betas = e.list("solver.beta")?.unwrap_or_else(|| DEFAULT_BETAS.to_vec());
        if betas.is_empty() || betas[0] <= 0.0 || betas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(e.err("solver.beta", "must be positive and strictly increasing"));
        }
        let constraint_mode = match e.raw("solver.mode").unwrap_or("penalty") {
            "penalty" => ConstraintMode::Penalty { betas },
            "reject" => ConstraintMode::Reject,
            other => return Err(e.err("solver.mode", format!("expected 'penalty' or 'reject', got '{other}'"))),
        };
        let ns = e.list("solver.n")?.unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0]);
        if ns.is_empty() || ns[0] < 1.0 || ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(e.err("solver.n", "must be >= 1 and strictly increasing"));
        }
        let control = e.list("control.c")?.unwrap_or_else(|| vec![0.0]);
        if control.len() != 1 && control.len() != grid.n_t {
            return Err(e.err("control.c", format!("expected 1 or {} values, got {}", grid.n_t, control.len())));
        }
        let splits = match e.raw("check.splits") {
            Some(_) => e
                .list("check.splits")?
                .expect("present")
                .into_iter()
                .map(|v| {
                    if v >= 1.0 && v.fract() == 0.0 && (v as usize) < grid.n_t {
                        Ok(v as usize)
                    } else {
                        Err(e.err("check.splits", format!("{v} is not an interior node count")))
                    }
                })
                .collect::<Result<Vec<_>>>()?,
            None => [1, 2, 3].iter().map(|q| q * grid.n_t / 4).filter(|&s| s > 0).collect(),
        };
        Ok(Self {
            model,
            grid,
            running,
            terminal,
            tol,
            max_iter: e.count("solver.maxIter")?.unwrap_or(20_000),
            constraint_mode,
            ns,
            control,
            phi0: e.number("init.phi0")?,
            x0: e.number("x.x0")?,
            samples: e.count("check.samples")?.unwrap_or(10),
            splits,
            bump: e.number("check.bump")?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    /// Objective at penalization index `n`.
    pub fn objective(&self, n: Option<f64>) -> ObjectiveSpec {
        let mut spec = ObjectiveSpec::new(self.model.clone(), self.grid, self.running.clone(), self.terminal.clone())
            .with_n(n)
            .with_tol(self.tol)
            .with_constraint_mode(self.constraint_mode.clone());
        spec.max_iter = self.max_iter;
        spec
    }

    pub fn control_grid(&self) -> ControlGrid {
        if self.control.len() == 1 {
            ControlGrid::constant(self.control[0], self.grid.n_t)
        } else {
            ControlGrid::new(self.control.clone())
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|err| Error::Io {
        path: path.display().to_string(),
        msg: err.to_string(),
    })
}

fn io_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Io {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Reads named columns of a headed CSV file.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|err| io_err(path, err.to_string()))?;
    let headers = reader.headers().map_err(|err| io_err(path, err.to_string()))?.clone();
    let idx = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| io_err(path, format!("missing column '{n}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|err| io_err(path, err.to_string()))?;
        for (col, &i) in idx.iter().enumerate() {
            let cell = rec.get(i).unwrap_or("");
            let v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| io_err(path, format!("row {}: bad value '{cell}' in column '{}'", row + 2, names[col])))?;
            cols[col].push(v);
        }
    }
    Ok(cols)
}

/// Initial triple from a CSV with columns `phi1,omega` sampled at
/// `theta = -R + j delta`, `j = 0..=nR`. `phi0` defaults to `phi1(0)`.
pub fn read_init(path: &Path, cfg: &RunConfig) -> Result<InitialTriple> {
    let mut cols = read_columns(path, &["phi1", "omega"])?;
    let n = cfg.grid.n_r + 1;
    if cols[0].len() != n {
        return Err(io_err(path, format!("expected {n} rows, got {}", cols[0].len())));
    }
    let omega = cols.pop().expect("two columns");
    let phi1 = cols.pop().expect("two columns");
    let phi0 = cfg.phi0.unwrap_or(phi1[n - 1]);
    let init = InitialTriple::new(phi0, phi1, omega);
    init.validate(&cfg.model, cfg.grid.n_r)?;
    Ok(init)
}

/// Structural state from a single-column CSV `x1` and `x.x0`.
pub fn read_x(path: &Path, cfg: &RunConfig) -> Result<M2Point> {
    let x1 = read_columns(path, &["x1"])?.pop().expect("one column");
    let x0 = cfg.x0.ok_or_else(|| Error::Config {
        line: 0,
        key: "x.x0".into(),
        msg: "missing required key (needed with --x)".into(),
    })?;
    let x = M2Point::new(x0, x1);
    x.validate(cfg.grid.n_r)?;
    Ok(x)
}

/// 17 significant digits, so that written values read back bit-exactly.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}
