//! Command-line front end: `spp <subcommand> <config> [--out DIR]`.
//!
//! Exit status is 0 on success, 2 for configuration or usage errors and 3 for
//! numerical failures.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analytic::{analytic_eigenfunction, dtilde, find_omega0, nonexistence_scan, positivity_onset, pt_check, scan_dtilde};
use crate::config::{parse_config, CaseConfig};
use crate::continuation::{continue_branch, newton_solve, NewtonOptions, NonlinearProblem};
use crate::error::{Result, SppError};
use crate::expansion::{expand, predictor, second_order_fixed_point, Expander, ExpansionData};
use crate::floquet::two_layer_nonexistence_scan;
use crate::grid::{gamma_nodes, inner, node_values, norm, pt_defect, Grid};
use crate::spectrum::{adjoint_is_conjugate_check, analytic_profile_error, eigen_residuals, solve_linear_eigenpair, EigenData};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "spp", version, about = "Nonlinear surface plasmon eigenvalue branches in layered media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// Case configuration file.
    #[arg(value_name = "CONFIG")]
    config_pos: Option<PathBuf>,
    #[arg(long = "config", value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for parallel scans (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write every branch point's field to `fields/`.
    #[arg(long)]
    dump_fields: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Width condition dtilde_m(omega) over the configured range.
    ScanDtilde(Common),
    /// Real frequency with dtilde_m(omega0) = d.
    FindOmega0(Common),
    /// Discrete linear eigenpair, adjoint and transversality.
    SolveLinear(Common),
    /// First- and second-order bifurcation coefficients.
    Expand(Common),
    /// Nonlinear branch by Newton continuation in omega.
    Branch(Common),
    /// Interface quotients for a two half-line configuration.
    FloquetScan(Common),
    /// Invariant checks for the configured case.
    Validate(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::ScanDtilde(c) => ("scan-dtilde", c),
            Command::FindOmega0(c) => ("find-omega0", c),
            Command::SolveLinear(c) => ("solve-linear", c),
            Command::Expand(c) => ("expand", c),
            Command::Branch(c) => ("branch", c),
            Command::FloquetScan(c) => ("floquet-scan", c),
            Command::Validate(c) => ("validate", c),
        }
    }
}

/// Parses arguments and runs a subcommand, returning the exit status.
pub fn run_from<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (name, common) = cli.command.parts();
    let path = match (&common.config, &common.config_pos) {
        (Some(p), None) | (None, Some(p)) => p.clone(),
        (Some(_), Some(_)) => {
            eprintln!("error: give the config either positionally or with --config, not both");
            return EXIT_CONFIG;
        }
        (None, None) => {
            eprintln!("error: a config file is required");
            return EXIT_CONFIG;
        }
    };
    let cfg = match parse_config(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(t) = common.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_CONFIG;
        }
        // Fails only when a pool already exists, e.g. on repeated in-process runs.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let mut run = match Run::new(name, &path, &common.out, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let result = match name {
        "scan-dtilde" => scan_cmd(&cfg, &mut run),
        "find-omega0" => find_cmd(&cfg, &mut run),
        "solve-linear" => linear_cmd(&cfg, &mut run),
        "expand" => expand_cmd(&cfg, &mut run),
        "branch" => branch_cmd(&cfg, &mut run, common.dump_fields),
        "floquet-scan" => floquet_cmd(&cfg, &mut run),
        "validate" => validate_cmd(&cfg, &mut run),
        _ => unreachable!("clap restricts subcommands"),
    };
    let code = match &result {
        Ok(code) => *code,
        Err(e @ (SppError::Config(_) | SppError::InvalidParameter { .. })) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_NUMERICAL
        }
    };
    if let Err(e) = run.finish(code, result.as_ref().err().map(|e| e.to_string())) {
        eprintln!("error: writing manifest: {e}");
        return EXIT_NUMERICAL;
    }
    code
}

pub fn main_entry() -> i32 {
    run_from(std::env::args())
}

/// Output directory bookkeeping and the run manifest.
struct Run {
    subcommand: &'static str,
    out: PathBuf,
    config_hash: String,
    config_path: PathBuf,
    label: String,
    started: u64,
    outputs: Vec<String>,
    partial: bool,
}

fn now_epoch() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Run {
    fn new(subcommand: &'static str, config: &Path, out: &Path, cfg: &CaseConfig) -> Result<Self> {
        let bytes = fs::read(config)?;
        let config_hash = Sha256::digest(&bytes).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        fs::create_dir_all(out)?;
        Ok(Run {
            subcommand,
            out: out.to_path_buf(),
            config_hash,
            config_path: config.to_path_buf(),
            label: cfg.label.clone(),
            started: now_epoch(),
            outputs: vec![],
            partial: false,
        })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_file_name(format!(".{}.tmp", path.file_name().and_then(|s| s.to_str()).unwrap_or("out")));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(contents.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        if !self.outputs.iter().any(|o| o == rel) {
            self.outputs.push(rel.to_string());
        }
        Ok(())
    }

    fn write_json(&mut self, rel: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| SppError::Io(e.into()))?;
        text.push('\n');
        self.write(rel, &text)
    }

    fn finish(&mut self, code: i32, error: Option<String>) -> Result<()> {
        let manifest = json!({
            "subcommand": self.subcommand,
            "label": self.label,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config_path.display().to_string(),
            "config_sha256": self.config_hash,
            "started": self.started,
            "finished": now_epoch(),
            "exit_code": code,
            "partial": self.partial || code != EXIT_OK,
            "error": error,
            "outputs": self.outputs,
        });
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| SppError::Io(e.into()))?;
        text.push('\n');
        let outputs = std::mem::take(&mut self.outputs);
        self.write("manifest.json", &text)?;
        self.outputs = outputs;
        Ok(())
    }
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn cj(z: Complex64) -> Value {
    json!({ "re": z.re, "im": z.im })
}

/// Finite floats only; anything else becomes null.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn field_csv(grid: &Grid, field: &[Complex64]) -> String {
    let mut s = String::from("x,re,im\n");
    for (j, z) in field.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", f(grid.x(j)), f(z.re), f(z.im));
    }
    s
}

fn omega_guess(cfg: &CaseConfig) -> Result<(f64, (f64, f64))> {
    let lin = cfg.require_linear()?;
    let guess = match lin.omega_guess {
        Some(g) => g,
        None => find_omega0(&cfg.stack, lin.d, lin.m, cfg.log_branch, lin.bracket)?,
    };
    Ok((guess, lin.bracket))
}

/// Linear eigenpair of a case, seeded by `omega_guess` or the analytic root.
pub fn linear_solve(cfg: &CaseConfig) -> Result<EigenData> {
    let (guess, bracket) = omega_guess(cfg)?;
    solve_linear_eigenpair(&cfg.stack, cfg.grid, guess, bracket)
}

fn scan_cmd(cfg: &CaseConfig, run: &mut Run) -> Result<i32> {
    let scan = cfg.require_scan()?;
    let mut csv = String::from("m,omega,re_dtilde,im_dtilde,decaying,admissible\n");
    let mut onsets = serde_json::Map::new();
    for &m in &scan.ms {
        let samples = scan_dtilde(&cfg.stack, scan.omega_range, scan.steps, m, cfg.log_branch);
        for s in &samples {
            let (re, im) = s.value.map_or((f64::NAN, f64::NAN), |z| (z.re, z.im));
            let _ =
                writeln!(csv, "{m},{},{},{},{},{}", f(s.omega), f(re), f(im), u8::from(s.decaying), u8::from(s.is_admissible(scan.im_tol)));
        }
        onsets.insert(m.to_string(), positivity_onset(&samples, scan.im_tol).map_or(Value::Null, |w| json!(w)));
    }
    run.write("dtilde_scan.csv", &csv)?;
    let report = nonexistence_scan(&cfg.stack, scan.omega_range, scan.steps, &scan.ms, cfg.log_branch, scan.im_tol);
    run.write_json(
        "scan_report.json",
        &json!({
            "label": cfg.label,
            "log_branch": cfg.log_branch.name(),
            "omega_range": [scan.omega_range.0, scan.omega_range.1],
            "steps": scan.steps,
            "m": scan.ms,
            "im_tol": scan.im_tol,
            "samples": report.samples,
            "singular_samples": report.singular,
            "non_decaying_samples": report.non_decaying,
            "positive_real_samples": report.positive_real,
            "admissible_samples": report.admissible.len(),
            "admissible_width_found": !report.admissible.is_empty(),
            "positivity_onset": onsets,
        }),
    )?;
    Ok(EXIT_OK)
}

fn find_cmd(cfg: &CaseConfig, run: &mut Run) -> Result<i32> {
    let lin = cfg.require_linear()?;
    let w = find_omega0(&cfg.stack, lin.d, lin.m, cfg.log_branch, lin.bracket)?;
    let d = dtilde(&cfg.stack, w, lin.m, cfg.log_branch)?;
    run.write_json(
        "omega0.json",
        &json!({
            "label": cfg.label,
            "omega0": w,
            "d": lin.d,
            "m": lin.m,
            "log_branch": cfg.log_branch.name(),
            "dtilde": cj(d),
            "pt_symmetric": pt_check(&cfg.stack, w),
        }),
    )?;
    Ok(EXIT_OK)
}

fn linear_cmd(cfg: &CaseConfig, run: &mut Run) -> Result<i32> {
    let eig = linear_solve(cfg)?;
    let lin = cfg.require_linear()?;
    let analytic = find_omega0(&cfg.stack, lin.d, lin.m, cfg.log_branch, lin.bracket).ok();
    let (r1, r2) = eigen_residuals(&eig, &cfg.stack)?;
    let profile_error = analytic.and_then(|w| analytic_profile_error(&eig, &cfg.stack, w).ok());
    let grid = &eig.grid;
    run.write_json(
        "linear.json",
        &json!({
            "label": cfg.label,
            "omega0": eig.omega0,
            "omega0_analytic": analytic,
            "mu_min": cj(eig.mu_min),
            "transversality": cj(eig.transversality),
            "gap": eig.gap,
            "n": grid.n,
            "h": grid.h,
            "x_min": grid.x_min,
            "x_max": grid.x_max,
            "interface": eig.treatment.name(),
            "residual": r1,
            "adjoint_residual": r2,
            "adjoint_conjugate_defect": adjoint_is_conjugate_check(&eig),
            "pt_defect_phi0": pt_defect(&eig.phi0),
            "analytic_profile_error": profile_error,
        }),
    )?;
    run.write("phi0.csv", &field_csv(grid, &eig.phi0))?;
    run.write("phi0_star.csv", &field_csv(grid, &eig.phi0_star))?;
    let w = node_values(grid, &cfg.stack, &cfg.stack.layer_w(Complex64::new(eig.omega0, 0.0), 0)?, eig.treatment);
    let g = gamma_nodes(grid, &cfg.stack, Complex64::new(eig.omega0, 0.0), 0, eig.treatment);
    let mut s = String::from("x,re_w,im_w,re_gamma,im_gamma\n");
    for j in 0..grid.n {
        let _ = writeln!(s, "{},{},{},{},{}", f(grid.x(j)), f(w[j].re), f(w[j].im), f(g[j].re), f(g[j].im));
    }
    run.write("potential.csv", &s)?;
    Ok(EXIT_OK)
}

fn expand_cmd(cfg: &CaseConfig, run: &mut Run) -> Result<i32> {
    let eig = linear_solve(cfg)?;
    let exp = expand(&eig, &cfg.stack)?;
    let ex = Expander::new(&eig, &cfg.stack)?;
    let corr_res = ex.correction_residual(&exp.phi_corr, &ex.phi_rhs(exp.nu));
    let grid = &eig.grid;
    let mut seconds = vec![];
    let mut psi_csv = String::from("eps,x,re,im\n");
    for &eps in &cfg.expansion.epsilons {
        match second_order_fixed_point(&eig, &exp, &cfg.stack, eps, cfg.expansion.tau) {
            Ok(s) => {
                for (j, z) in s.psi.iter().enumerate() {
                    let _ = writeln!(psi_csv, "{},{},{},{}", f(eps), f(grid.x(j)), f(z.re), f(z.im));
                }
                seconds.push(json!({
                    "eps": eps,
                    "sigma": cj(s.sigma),
                    "iterations": s.iterations,
                    "inner_iterations": s.inner_iterations,
                    "contraction_estimate": s.contraction_estimate,
                    "inner_contraction_estimate": s.inner_contraction_estimate,
                    "sigma_residual": s.sigma_residual,
                    "psi_residual": s.psi_residual,
                    "pt_defect_psi": pt_defect(&s.psi),
                }));
            }
            Err(e) => {
                run.partial = true;
                seconds.push(json!({ "eps": eps, "error": e.to_string() }));
            }
        }
    }
    run.write_json(
        "expansion.json",
        &json!({
            "label": cfg.label,
            "omega0": eig.omega0,
            "transversality": cj(eig.transversality),
            "nu": cj(exp.nu),
            "alpha": exp.alpha,
            "tau": cfg.expansion.tau,
            "correction_residual": corr_res,
            "correction_overlap": inner(&exp.phi_corr, &eig.phi0_star, eig.h()).norm(),
            "solvability_defect": exp.solvability_defect,
            "pt_defect_phi_corr": pt_defect(&exp.phi_corr),
            "second_order": seconds,
        }),
    )?;
    run.write("phi_corr.csv", &field_csv(grid, &exp.phi_corr))?;
    run.write("psi.csv", &psi_csv)?;
    Ok(if run.partial { EXIT_NUMERICAL } else { EXIT_OK })
}

fn branch_cmd(cfg: &CaseConfig, run: &mut Run, dump_fields: bool) -> Result<i32> {
    let br = cfg.require_branch()?;
    let eig = linear_solve(cfg)?;
    let exp = expand(&eig, &cfg.stack)?;
    let branch = continue_branch(&eig, &exp, &cfg.stack, br.omega_end, br.steps, cfg.newton, &cfg.label)?;
    let nu = exp.nu.re;
    let mut csv = String::from("omega,eps,l2norm,residual,iterations\n");
    let mut pred = String::from("omega,eps,l2norm\n");
    for (i, p) in branch.points.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{},{},{}", f(p.omega), f(p.eps), f(p.l2norm), f(p.residual), p.iterations);
        let eps = (p.omega - eig.omega0) / nu;
        let (_, field) = predictor(&exp, &eig, eps, None);
        let _ = writeln!(pred, "{},{},{}", f(p.omega), f(eps), f(norm(&field, eig.h())));
        if dump_fields {
            run.write(&format!("fields/point_{i:04}.csv"), &field_csv(&eig.grid, &p.phi))?;
        }
    }
    run.write("branch.csv", &csv)?;
    run.write("predictor.csv", &pred)?;
    if let Some(last) = branch.points.last() {
        run.write("phi_final.csv", &field_csv(&eig.grid, &last.phi))?;
    }
    run.partial = branch.aborted.is_some();
    run.write_json(
        "branch.json",
        &json!({
            "label": cfg.label,
            "omega0": eig.omega0,
            "nu": cj(exp.nu),
            "omega_end": br.omega_end,
            "steps": br.steps,
            "points": branch.points.len(),
            "n": eig.grid.n,
            "aborted": branch.aborted,
        }),
    )?;
    if let Some(why) = &branch.aborted {
        eprintln!("warning: branch incomplete: {why}");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

fn floquet_cmd(cfg: &CaseConfig, run: &mut Run) -> Result<i32> {
    let fl = cfg.require_floquet()?;
    let report = two_layer_nonexistence_scan(&fl.left, &fl.right, fl.omega_range, fl.steps, fl.k)?;
    let mut csv = String::from("omega,re_Rp,im_Rp,re_Rm,im_Rm,gap\n");
    for s in &report.samples {
        let q = s.quotients;
        let (rp, rm) = q.map_or((Complex64::new(f64::NAN, f64::NAN), Complex64::new(f64::NAN, f64::NAN)), |q| (q.r_plus, q.r_minus));
        let _ = writeln!(csv, "{},{},{},{},{},{}", f(s.omega), f(rp.re), f(rp.im), f(rm.re), f(rm.im), f(s.gap().unwrap_or(f64::NAN)));
    }
    run.write("floquet_scan.csv", &csv)?;
    run.write_json(
        "floquet_report.json",
        &json!({
            "label": cfg.label,
            "omega_range": [fl.omega_range.0, fl.omega_range.1],
            "samples": report.samples.len(),
            "skipped_samples": report.skipped,
            "applicable": report.applicable,
            "min_gap": report.min_gap,
            "min_abs_im_r_minus": report.min_im_r_minus,
            "nonexistence": report.nonexistence(),
        }),
    )?;
    Ok(EXIT_OK)
}

struct Checks(Vec<Value>);

impl Checks {
    fn le(&mut self, name: &str, value: f64, tol: f64) {
        self.0.push(json!({ "check": name, "value": num(value), "tol": tol, "pass": value <= tol }));
    }

    fn ge(&mut self, name: &str, value: f64, bound: f64) {
        self.0.push(json!({ "check": name, "value": num(value), "min": bound, "pass": value >= bound }));
    }

    fn flag(&mut self, name: &str, ok: bool) {
        self.0.push(json!({ "check": name, "pass": ok }));
    }

    fn error(&mut self, name: &str, e: &SppError) {
        self.0.push(json!({ "check": name, "pass": false, "error": e.to_string() }));
    }

    fn all_pass(&self) -> bool {
        self.0.iter().all(|c| c["pass"] == Value::Bool(true))
    }
}

fn validate_cmd(cfg: &CaseConfig, run: &mut Run) -> Result<i32> {
    let mut checks = Checks(vec![]);
    if let Some(fl) = &cfg.floquet {
        match two_layer_nonexistence_scan(&fl.left, &fl.right, fl.omega_range, fl.steps, fl.k) {
            Ok(r) => {
                checks.flag("two-layer argument applicable", r.applicable);
                checks.ge("min |R+ - R-|", r.min_gap.unwrap_or(0.0), f64::MIN_POSITIVE);
            }
            Err(e) => checks.error("two-layer scan", &e),
        }
    }
    if let Some(scan) = &cfg.scan {
        if cfg.linear.is_none() {
            let r = nonexistence_scan(&cfg.stack, scan.omega_range, scan.steps, &scan.ms, cfg.log_branch, scan.im_tol);
            checks.flag("no admissible width", r.admissible.is_empty());
            checks.flag("no positive real formal width", r.positive_real == 0);
        }
    }
    if cfg.linear.is_some() {
        validate_linear(cfg, &mut checks);
    }
    let pass = checks.all_pass();
    run.write_json("validate.json", &json!({ "label": cfg.label, "pass": pass, "checks": checks.0 }))?;
    for c in &checks.0 {
        let ok = c["pass"] == Value::Bool(true);
        println!("{} {}", if ok { "PASS" } else { "FAIL" }, c["check"].as_str().unwrap_or(""));
    }
    Ok(if pass { EXIT_OK } else { EXIT_NUMERICAL })
}

fn validate_linear(cfg: &CaseConfig, checks: &mut Checks) {
    let lin = cfg.require_linear().expect("checked by caller");
    let stack = &cfg.stack;
    let analytic = find_omega0(stack, lin.d, lin.m, cfg.log_branch, lin.bracket);
    match &analytic {
        &Ok(w) => {
            checks.flag("PT-symmetric potential at omega0", pt_check(stack, w));
            match analytic_eigenfunction(stack, w) {
                Ok(p) => checks.le("analytic matching residual", crate::analytic::matching_residual(&p), 1e-8),
                Err(e) => checks.error("analytic eigenfunction", &e),
            }
        }
        Err(e) => checks.error("analytic omega0", e),
    }
    let eig = match linear_solve(cfg) {
        Ok(e) => e,
        Err(e) => return checks.error("linear eigenpair", &e),
    };
    let h = eig.h();
    checks.le("| ||phi0|| - 1 |", (norm(&eig.phi0, h) - 1.0).abs(), 1e-12);
    checks.le("| <phi0, phi0*> - 1 |", (inner(&eig.phi0, &eig.phi0_star, h) - 1.0).norm(), 1e-12);
    match eigen_residuals(&eig, stack) {
        Ok((r1, r2)) => {
            checks.le("||L phi0||", r1, 1e-8);
            checks.le("||L^H phi0*||", r2, 1e-8);
        }
        Err(e) => checks.error("eigen residuals", &e),
    }
    checks.ge("|transversality|", eig.transversality.norm(), 1e-8);
    checks.ge("spectral gap", eig.gap, 1e-8);
    checks.le("phi0* vs conj(phi0)", adjoint_is_conjugate_check(&eig), 1e-8);
    checks.le("PT defect phi0", pt_defect(&eig.phi0), 1e-6);
    if let (true, Ok(w)) = (eig.grid.n >= 4096, &analytic) {
        checks.le("|omega0 FD - omega0 analytic|", (eig.omega0 - w).abs(), 2e-3);
        match analytic_profile_error(&eig, stack, *w) {
            Ok(e) => checks.le("FD vs analytic profile", e, 1e-4),
            Err(e) => checks.error("FD vs analytic profile", &e),
        }
    }
    let exp = match expand(&eig, stack) {
        Ok(e) => e,
        Err(e) => return checks.error("expansion", &e),
    };
    if let Ok(ex) = Expander::new(&eig, stack) {
        checks.le("phi correction residual", ex.correction_residual(&exp.phi_corr, &ex.phi_rhs(exp.nu)), 1e-8);
    }
    checks.le("<phi, phi0*>", inner(&exp.phi_corr, &eig.phi0_star, h).norm(), 1e-10);
    checks.le("Im nu / |nu|", exp.nu.im.abs() / exp.nu.norm().max(f64::MIN_POSITIVE), 1e-6);
    checks.le("PT defect phi", pt_defect(&exp.phi_corr), 1e-6);
    match second_order_fixed_point(&eig, &exp, stack, 1e-3, cfg.expansion.tau) {
        Ok(s) => {
            checks.le("Im sigma / max(1, |sigma|)", s.sigma.im.abs() / s.sigma.norm().max(1.0), 1e-6);
            checks.le("PT defect psi", pt_defect(&s.psi), 1e-6);
            checks.le("fixed-point contraction", s.contraction_estimate.max(s.inner_contraction_estimate), 0.999);
        }
        Err(e) => checks.error("second-order fixed point", &e),
    }
    if exp.nu.re != 0.0 {
        validate_newton(cfg, &eig, &exp, checks);
    }
}

fn validate_newton(cfg: &CaseConfig, eig: &EigenData, exp: &ExpansionData, checks: &mut Checks) {
    let stack = &cfg.stack;
    let eps = 1e-3;
    let omega = eig.omega0 + eps * exp.nu.re;
    let (_, seed) = predictor(exp, eig, eps, None);
    match newton_solve(&seed, omega, stack, &eig.grid, eig.treatment, cfg.newton) {
        Ok(p) => {
            checks.le("Newton residual near omega0", p.residual / p.l2norm.max(1.0), cfg.newton.tol);
            checks.le("Newton iterations near omega0", p.iterations as f64, 8.0);
            checks.le("Im <phi, phi0*>", inner(&p.phi, &eig.phi0_star, eig.h()).im.abs(), 1e-8);
            if let Ok(prob) = NonlinearProblem::new(&eig.grid, stack, omega, eig.treatment) {
                let delta: Vec<Complex64> = (0..eig.grid.n)
                    .map(|j| {
                        let t = j as f64 / eig.grid.n as f64;
                        Complex64::new((17.0 * t).sin(), (23.0 * t).cos()) * p.phi[j].norm().max(1e-3)
                    })
                    .collect();
                let hh = 1e-6;
                let plus: Vec<Complex64> = p.phi.iter().zip(&delta).map(|(a, b)| a + hh * b).collect();
                let minus: Vec<Complex64> = p.phi.iter().zip(&delta).map(|(a, b)| a - hh * b).collect();
                let j = prob.jacobian_apply(&p.phi, &delta);
                let d: Vec<Complex64> =
                    prob.residual(&plus).iter().zip(prob.residual(&minus)).zip(&j).map(|((a, b), jj)| (a - b) / (2.0 * hh) - jj).collect();
                checks.le("Jacobian vs central differences", norm(&d, eig.h()) / norm(&j, eig.h()), 1e-6);
            }
        }
        Err(e) => checks.error("Newton near omega0", &e),
    }
    if let Some(br) = cfg.branch {
        match continue_branch(eig, exp, stack, br.omega_end, br.steps, NewtonOptions { ..cfg.newton }, &cfg.label) {
            Ok(b) => {
                checks.flag("branch complete", b.aborted.is_none());
                let worst = b.points.iter().map(|p| p.residual / p.l2norm.max(1.0)).fold(0.0, f64::max);
                checks.le("branch residual", worst, cfg.newton.tol);
                checks.le("branch PT defect", crate::continuation::branch_pt_defect(&b), 1e-6);
                checks.flag(
                    "branch omega monotone",
                    b.points.windows(2).all(|w| (w[1].omega - w[0].omega) * (br.omega_end - eig.omega0) > 0.0),
                );
            }
            Err(e) => checks.error("branch", &e),
        }
    }
}
