//! Experiment drivers. Each writes its files into the output directory and returns a
//! one-line summary for stdout.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use shellspec_core::dirac::dirac_matrices;
use shellspec_core::search::Bracket;
use shellspec_core::spectral::{
    find_eigenvalues, nonrel_limit_sweep, scan_gap, verify_symmetries, EigenResult, EigenSearch, NonrelTable,
    SymmetryReport,
};
use shellspec_core::verify::{run_checks, CheckOutcome, VerifyLevel};

use crate::config::{Echo, RunConfig};
use crate::error::CliError;

pub const DENSITY_MAGIC: &[u8; 4] = b"SHSD";

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|source| CliError::Output { path: path.display().to_string(), source })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(dir, name, text.as_bytes())
}

#[derive(Serialize)]
struct BracketFile<'a> {
    #[serde(flatten)]
    echo: Echo<'a>,
    bracket_threshold: f64,
    brackets: &'a [Bracket],
}

#[derive(Serialize)]
struct EigenFile<'a> {
    #[serde(flatten)]
    echo: Echo<'a>,
    eigenvalues: &'a [EigenResult],
    rejected_brackets: &'a [Bracket],
}

#[derive(Serialize)]
struct SymmetryFile<'a> {
    #[serde(flatten)]
    echo: Echo<'a>,
    report: &'a SymmetryReport,
}

#[derive(Serialize)]
struct VerifyFile<'a> {
    level: VerifyLevel,
    checks: &'a [CheckOutcome],
    passed: bool,
}

pub fn scan(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let params = config.params()?;
    let coupling = config.coupling();
    let surface = config.surface.build()?;
    let scan = scan_gap(&coupling, &surface, &params, &config.scan)?;
    let echo = Echo::new(config);
    let csv = format!("{}{}", echo.csv_header(), scan.to_csv());
    write_file(out, "scan.csv", csv.as_bytes())?;
    write_json(
        out,
        "brackets.json",
        &BracketFile { echo, bracket_threshold: scan.bracket_threshold, brackets: &scan.brackets },
    )?;
    let min = scan.sigma_min.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!("{} samples, min sigma {min:.6e}, {} bracket(s)", scan.lambdas.len(), scan.brackets.len()))
}

/// Little-endian: magic, u32 echo length, echo JSON, u32 node count, u32 density count,
/// then per density its λ (f64) and 4·nodes complex values (re, im) node by node.
pub fn density_bytes(echo: &Echo, search: &EigenSearch, nodes: usize) -> Vec<u8> {
    let json = serde_json::to_vec(echo).unwrap_or_default();
    let mut buf = Vec::new();
    buf.extend_from_slice(DENSITY_MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    let count: usize = search.eigenvalues.iter().map(|e| e.densities.len()).sum();
    buf.extend_from_slice(&(nodes as u32).to_le_bytes());
    buf.extend_from_slice(&(count as u32).to_le_bytes());
    for e in &search.eigenvalues {
        for d in &e.densities {
            buf.extend_from_slice(&e.lambda.to_le_bytes());
            for z in d.values.iter().flat_map(|s| s.iter()) {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    buf
}

pub fn eigs(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let params = config.params()?;
    let coupling = config.coupling();
    let surface = config.surface.build()?;
    let search = find_eigenvalues(&coupling, &surface, &params, &config.scan, &config.refine)?;
    let echo = Echo::new(config);
    write_file(out, "densities.bin", &density_bytes(&echo, &search, surface.len()))?;
    write_json(
        out,
        "eigenvalues.json",
        &EigenFile { echo, eigenvalues: &search.eigenvalues, rejected_brackets: &search.rejected },
    )?;
    let list: Vec<String> =
        search.eigenvalues.iter().map(|e| format!("{:.10} (x{})", e.lambda, e.multiplicity)).collect();
    Ok(format!("{} eigenvalue(s): [{}]", list.len(), list.join(", ")))
}

pub fn symmetry(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let params = config.params()?;
    let coupling = config.coupling();
    coupling.ensure_noncritical(params.light_speed)?;
    let surface = config.surface.build()?;
    let report = verify_symmetries(&coupling, &surface, &params, &config.scan, &config.refine)?;
    write_json(out, "symmetry_report.json", &SymmetryFile { echo: Echo::new(config), report: &report })?;
    let lines: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("{} {} (mismatch {:.3e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.max_mismatch))
        .collect();
    Ok(lines.join("\n"))
}

pub fn nonrel_csv(echo: &Echo, table: &NonrelTable) -> String {
    let order = table.fitted_order.map_or("none".to_string(), |o| format!("{o:.16e}"));
    format!("{}# fitted_order: {order}\n{}", echo.csv_header(), table.to_csv())
}

pub fn nonrel(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let spec = config
        .nonrel
        .as_ref()
        .ok_or_else(|| CliError::Config("the nonrel command needs a \"nonrel\" section with c_list".into()))?;
    if config.coupling.eta != 0.0 && config.coupling.tau != 0.0 {
        return Err(shellspec_core::Error::MixedCoupling { eta: config.coupling.eta, tau: config.coupling.tau }.into());
    }
    if spec.c_list.is_empty() {
        return Err(CliError::Config("c_list is empty".into()));
    }
    let surface = config.surface.build()?;
    let table = nonrel_limit_sweep(
        config.coupling.eta,
        config.coupling.tau,
        &surface,
        config.physics.m,
        &spec.c_list,
        &spec.options(),
    )?;
    write_file(out, "nonrel.csv", nonrel_csv(&Echo::new(config), &table).as_bytes())?;
    Ok(match table.fitted_order {
        Some(o) => format!("{} row(s), fitted order {o:.3}", table.rows.len()),
        None => format!("{} row(s), no fitted order", table.rows.len()),
    })
}

/// Runs the invariant suite; prints one line per check and fails if any check fails.
pub fn verify(level: VerifyLevel, out: Option<&Path>) -> Result<String, CliError> {
    let checks = run_checks(level, &dirac_matrices())?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for c in &checks {
        let _ = writeln!(
            lock,
            "{} {:<32} measured {:.3e} tolerance {:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if let Some(dir) = out {
        write_json(dir, "verify.json", &VerifyFile { level, checks: &checks, passed: failed == 0 })?;
    }
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(format!("{} check(s) passed", checks.len()))
}
