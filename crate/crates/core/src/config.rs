//! Case configuration files: TOML with a fixed set of sections and keys.
//!
//! ```toml
//! [case]
//! label = "case2"
//! k = 2.0
//! chi3 = 1.0
//!
//! [[layer]]
//! kind = "constant"
//! eta = [9.2, -1.28]
//!
//! [stack]
//! interfaces = [0.0, 1.0]
//! ```

use std::path::Path;

use num_complex::Complex64;
use toml::{Table, Value};

use crate::analytic::LogBranch;
use crate::continuation::NewtonOptions;
use crate::error::{Result, SppError};
use crate::floquet::HalfLine;
use crate::grid::InterfaceTreatment;
use crate::materials::{LayerStack, MaterialModel};
use crate::spectrum::GridSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct ScanConfig {
    pub omega_range: (f64, f64),
    pub steps: usize,
    pub ms: Vec<i32>,
    pub im_tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearConfig {
    pub d: f64,
    pub m: i32,
    pub bracket: (f64, f64),
    pub omega_guess: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionConfig {
    pub epsilons: Vec<f64>,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchConfig {
    pub omega_end: f64,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct FloquetConfig {
    pub left: MaterialModel,
    pub right: HalfLine,
    pub omega_range: (f64, f64),
    pub steps: usize,
    pub k: f64,
}

#[derive(Clone, Debug)]
pub struct CaseConfig {
    pub label: String,
    pub stack: LayerStack,
    pub grid: GridSpec,
    pub newton: NewtonOptions,
    pub log_branch: LogBranch,
    pub scan: Option<ScanConfig>,
    pub linear: Option<LinearConfig>,
    pub expansion: ExpansionConfig,
    pub branch: Option<BranchConfig>,
    pub floquet: Option<FloquetConfig>,
    /// Unknown sections or keys; reported, not fatal.
    pub warnings: Vec<String>,
}

impl CaseConfig {
    pub fn require_scan(&self) -> Result<&ScanConfig> {
        self.scan.as_ref().ok_or_else(|| missing("scan"))
    }

    pub fn require_linear(&self) -> Result<&LinearConfig> {
        self.linear.as_ref().ok_or_else(|| missing("linear"))
    }

    pub fn require_branch(&self) -> Result<&BranchConfig> {
        self.branch.as_ref().ok_or_else(|| missing("branch"))
    }

    pub fn require_floquet(&self) -> Result<&FloquetConfig> {
        self.floquet.as_ref().ok_or_else(|| missing("floquet"))
    }
}

fn missing(field: &str) -> SppError {
    SppError::Config(format!("missing field `{field}`"))
}

fn bad(field: &str, reason: impl std::fmt::Display) -> SppError {
    SppError::Config(format!("field `{field}`: {reason}"))
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("case", &["label", "k", "chi3"]),
    ("stack", &["interfaces"]),
    ("grid", &["n", "padding_decades", "interface"]),
    ("numerics", &["tol", "max_iter", "log_branch"]),
    ("scan", &["omega_min", "omega_max", "steps", "m", "im_tol"]),
    ("linear", &["d", "m", "bracket", "omega_guess"]),
    ("expansion", &["epsilon", "tau"]),
    ("branch", &["omega_end", "steps"]),
    ("floquet", &["omega_min", "omega_max", "steps", "k", "left", "right"]),
];
const LAYER_KEYS: &[&str] = &["kind", "eta", "n", "gamma", "plasma_sq", "chi3"];
const RIGHT_KEYS: &[&str] = &["kind", "eta", "n", "gamma", "plasma_sq", "chi3", "mean", "amplitude", "period"];

struct Section<'a> {
    name: String,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn present(&self) -> bool {
        self.table.is_some()
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => as_float(v).map(Some).ok_or_else(|| bad(&self.path(key), "expected a number")),
        }
    }

    fn req_float(&self, key: &str) -> Result<f64> {
        self.float(key)?.ok_or_else(|| missing(&self.path(key)))
    }

    fn int(&self, key: &str) -> Result<Option<i64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(_) => Err(bad(&self.path(key), "expected an integer")),
        }
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        match self.int(key)? {
            None => Ok(None),
            Some(i) if i > 0 => Ok(Some(i as usize)),
            Some(_) => Err(bad(&self.path(key), "must be positive")),
        }
    }

    fn string(&self, key: &str) -> Result<Option<&'a str>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(bad(&self.path(key), "expected a string")),
        }
    }

    fn complex(&self, key: &str) -> Result<Option<Complex64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => as_complex(v).map(Some).ok_or_else(|| bad(&self.path(key), "expected a number or [re, im]")),
        }
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| as_float(v).ok_or_else(|| bad(&self.path(key), "expected an array of numbers")))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => as_float(v).map(|x| Some(vec![x])).ok_or_else(|| bad(&self.path(key), "expected an array of numbers")),
        }
    }

    fn ints(&self, key: &str) -> Result<Option<Vec<i32>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(vec![*i as i32])),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Integer(i) => Ok(*i as i32),
                    _ => Err(bad(&self.path(key), "expected integers")),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(bad(&self.path(key), "expected an integer or an array of integers")),
        }
    }

    fn pair(&self, key: &str) -> Result<Option<(f64, f64)>> {
        match self.floats(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 && v[0] < v[1] => Ok(Some((v[0], v[1]))),
            Some(_) => Err(bad(&self.path(key), "expected [lo, hi] with lo < hi")),
        }
    }
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn as_complex(v: &Value) -> Option<Complex64> {
    match v {
        Value::Array(a) if a.len() == 2 => Some(Complex64::new(as_float(&a[0])?, as_float(&a[1])?)),
        other => as_float(other).map(|re| Complex64::new(re, 0.0)),
    }
}

fn unknown_keys(table: &Table, allowed: &[&str], prefix: &str, warnings: &mut Vec<String>) {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            warnings.push(format!("unknown key `{prefix}.{key}` ignored"));
        }
    }
}

fn material(sec: &Section<'_>, default_chi3: Complex64) -> Result<MaterialModel> {
    let kind = sec.string("kind")?.ok_or_else(|| missing(&sec.path("kind")))?;
    let model = match kind {
        "constant" => MaterialModel::constant(sec.complex("eta")?.ok_or_else(|| missing(&sec.path("eta")))?),
        "refractive_index" => MaterialModel::from_refractive_index(sec.complex("n")?.ok_or_else(|| missing(&sec.path("n")))?),
        "drude" => {
            let plasma_sq = sec.float("plasma_sq")?.unwrap_or(1.0);
            if !(plasma_sq > 0.0) {
                return Err(bad(&sec.path("plasma_sq"), "must be positive"));
            }
            MaterialModel::drude_scaled(sec.req_float("gamma")?, plasma_sq)
        }
        other => {
            return Err(bad(&sec.path("kind"), format!("unknown material kind `{other}` (expected constant, refractive_index or drude)")))
        }
    };
    Ok(model.with_chi3(sec.complex("chi3")?.unwrap_or(default_chi3)))
}

pub fn parse_config_str(text: &str) -> Result<CaseConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| SppError::Config(e.to_string().trim_end().to_string()))?;
    let mut warnings = Vec::new();
    for (key, value) in &root {
        if key == "layer" {
            continue;
        }
        match SECTIONS.iter().find(|(name, _)| name == key) {
            None => warnings.push(format!("unknown section `{key}` ignored")),
            Some((name, keys)) => match value {
                Value::Table(t) => unknown_keys(t, keys, name, &mut warnings),
                _ => return Err(bad(key, "expected a section")),
            },
        }
    }
    let section = |name: &str| -> Result<Section<'_>> {
        match root.get(name) {
            None => Ok(Section { name: name.to_string(), table: None }),
            Some(Value::Table(t)) => Ok(Section { name: name.to_string(), table: Some(t) }),
            Some(_) => Err(bad(name, "expected a section")),
        }
    };

    let case = section("case")?;
    let label = case.string("label")?.unwrap_or("case").to_string();
    let k = case.req_float("k")?;
    let chi3 = case.complex("chi3")?.unwrap_or(Complex64::new(1.0, 0.0));

    let layer_values = match root.get("layer") {
        Some(Value::Array(a)) => a.as_slice(),
        Some(_) => return Err(bad("layer", "expected [[layer]] tables")),
        None => &[],
    };
    let mut layers = Vec::with_capacity(layer_values.len());
    for (i, v) in layer_values.iter().enumerate() {
        let Value::Table(t) = v else {
            return Err(bad(&format!("layer[{i}]"), "expected a table"));
        };
        let name = format!("layer[{i}]");
        unknown_keys(t, LAYER_KEYS, &name, &mut warnings);
        layers.push(material(&Section { name, table: Some(t) }, chi3)?);
    }

    let stack_sec = section("stack")?;
    let interfaces = stack_sec.floats("interfaces")?;
    let stack = if layers.is_empty() {
        if interfaces.is_some() {
            return Err(missing("layer"));
        }
        None
    } else {
        let interfaces = interfaces.ok_or_else(|| missing("stack.interfaces"))?;
        if interfaces.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("stack.interfaces", "positions must be strictly increasing"));
        }
        if interfaces.len() + 1 != layers.len() {
            return Err(bad("stack.interfaces", format!("{} layers need {} interfaces", layers.len(), layers.len() - 1)));
        }
        Some(LayerStack::new(layers, interfaces, k).map_err(|e| SppError::Config(e.to_string()))?)
    };

    let grid_sec = section("grid")?;
    let mut grid = GridSpec::new(grid_sec.count("n")?.unwrap_or(2048));
    if let Some(p) = grid_sec.float("padding_decades")? {
        if !(p > 0.0) {
            return Err(bad("grid.padding_decades", "must be positive"));
        }
        grid.padding_decades = p;
    }
    if let Some(t) = grid_sec.string("interface")? {
        grid.treatment = InterfaceTreatment::parse(t)
            .ok_or_else(|| bad("grid.interface", format!("unknown treatment `{t}` (expected right-limit, average or jump-corrected)")))?;
    }

    let num = section("numerics")?;
    let mut newton = NewtonOptions::default();
    if let Some(t) = num.float("tol")? {
        if !(t >= 1e-13) {
            return Err(bad("numerics.tol", "must be at least 1e-13"));
        }
        newton.tol = t;
    }
    if let Some(m) = num.count("max_iter")? {
        newton.max_iter = m;
    }
    let log_branch = match num.string("log_branch")? {
        None => LogBranch::default(),
        Some(s) => LogBranch::parse(s)
            .ok_or_else(|| bad("numerics.log_branch", format!("unknown branch `{s}` (expected principal or clockwise)")))?,
    };

    let sc = section("scan")?;
    let scan = if sc.present() {
        let lo = sc.req_float("omega_min")?;
        let hi = sc.req_float("omega_max")?;
        if !(lo < hi) {
            return Err(bad("scan.omega_max", "must exceed scan.omega_min"));
        }
        Some(ScanConfig {
            omega_range: (lo, hi),
            steps: sc.count("steps")?.unwrap_or(500),
            ms: sc.ints("m")?.unwrap_or_else(|| vec![-1]),
            im_tol: sc.float("im_tol")?.unwrap_or(1e-6),
        })
    } else {
        None
    };

    let lin = section("linear")?;
    let linear = if lin.present() {
        let d = lin.req_float("d")?;
        if !(d > 0.0) {
            return Err(bad("linear.d", "must be positive"));
        }
        let bracket = lin.pair("bracket")?.ok_or_else(|| missing("linear.bracket"))?;
        let m = match lin.int("m")? {
            Some(m) => m as i32,
            None => -1,
        };
        Some(LinearConfig { d, m, bracket, omega_guess: lin.float("omega_guess")? })
    } else {
        None
    };

    let ex = section("expansion")?;
    let expansion = ExpansionConfig { epsilons: ex.floats("epsilon")?.unwrap_or_else(|| vec![1e-3]), tau: ex.float("tau")?.unwrap_or(1.0) };
    if expansion.epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(bad("expansion.epsilon", "values must be positive"));
    }
    if !(expansion.tau > 0.0) {
        return Err(bad("expansion.tau", "must be positive"));
    }

    let br = section("branch")?;
    let branch = if br.present() {
        Some(BranchConfig { omega_end: br.req_float("omega_end")?, steps: br.count("steps")?.unwrap_or(64) })
    } else {
        None
    };

    let fl = section("floquet")?;
    let floquet = if fl.present() {
        let lo = fl.req_float("omega_min")?;
        let hi = fl.req_float("omega_max")?;
        if !(lo < hi) {
            return Err(bad("floquet.omega_max", "must exceed floquet.omega_min"));
        }
        let sub = |key: &str, allowed: &[&str], warnings: &mut Vec<String>| -> Result<Section<'_>> {
            let name = format!("floquet.{key}");
            match fl.get(key) {
                Some(Value::Table(t)) => {
                    unknown_keys(t, allowed, &name, warnings);
                    Ok(Section { name, table: Some(t) })
                }
                Some(_) => Err(bad(&name, "expected a table")),
                None => Err(missing(&name)),
            }
        };
        let left = material(&sub("left", LAYER_KEYS, &mut warnings)?, chi3)?;
        let right_sec = sub("right", RIGHT_KEYS, &mut warnings)?;
        let right = if right_sec.string("kind")? == Some("cosine") {
            HalfLine::cosine(right_sec.req_float("mean")?, right_sec.req_float("amplitude")?, right_sec.float("period")?.unwrap_or(1.0))
                .map_err(|e| bad("floquet.right.period", e))?
        } else {
            HalfLine::Homogeneous(material(&right_sec, chi3)?)
        };
        Some(FloquetConfig { left, right, omega_range: (lo, hi), steps: fl.count("steps")?.unwrap_or(500), k: fl.float("k")?.unwrap_or(k) })
    } else {
        None
    };

    let stack = match stack {
        Some(s) => s,
        None if floquet.is_some() => LayerStack::new(vec![MaterialModel::constant(Complex64::new(0.0, 0.0))], vec![], k)?,
        None => return Err(missing("layer")),
    };

    Ok(CaseConfig { label, stack, grid, newton, log_branch, scan, linear, expansion, branch, floquet, warnings })
}

pub fn parse_config(path: &Path) -> Result<CaseConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| SppError::Config(format!("{}: {e}", path.display())))?;
    parse_config_str(&text).map_err(|e| match e {
        SppError::Config(msg) => SppError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
