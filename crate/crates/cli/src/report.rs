use std::io::Write;

use chernweil::bundle::SingularPoint;
use chernweil::pushforward::FamilyKind;
use chernweil::residue::{Extrapolation, PipelineState, ResidueConfig, ResidueReport, SingularityRecord};
use chernweil::scenarios::Scenario;
use chernweil::transgression::IdentityResidual;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: &str = "chernweil-report/1";

pub const RESIDUE_TOL: f64 = 2e-2;
pub const BALANCE_TOL: f64 = 1e-2;
pub const SPREAD_TOL: f64 = 1e-2;
pub const IMAG_TOL: f64 = 1e-6;
/// Radius of the fixed mask used to compare identity residuals across resolutions.
pub const FIXED_MASK_RADIUS: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub oracle: String,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, expected: f64, tolerance: f64, oracle: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            value,
            expected,
            tolerance,
            pass: (value - expected).abs() <= tolerance,
            oracle: oracle.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityEntry {
    pub point: SingularPoint,
    pub eps: Vec<f64>,
    pub per_eps: Vec<f64>,
    pub extrapolated: f64,
    pub imag: f64,
    pub spread: f64,
    pub method: Extrapolation,
    pub residue_degree: i64,
    pub oracle: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedMaskResidual {
    pub radius: f64,
    pub residual: IdentityResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub build_ms: f64,
    pub pipeline_ms: f64,
    pub residues_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: String,
    pub config: RunConfig,
    pub scenario: String,
    pub phi: String,
    pub kind: FamilyKind,
    pub normalized: bool,
    pub orientation: String,
    pub resolution: usize,
    pub lhs: f64,
    pub lhs_imag: f64,
    pub lhs_oracle: f64,
    pub singularities: Vec<SingularityEntry>,
    pub residue_sum: f64,
    pub balance: f64,
    /// Off the default mask (a couple of cells around each point).
    pub identity: IdentityResidual,
    pub identity_fixed: FixedMaskResidual,
    pub oracle_provenance: String,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub runtime: Runtime,
}

fn residue_entry(r: &SingularityRecord, oracle: Option<f64>, normalized: bool) -> SingularityEntry {
    let mut pass = r.imag.abs() <= IMAG_TOL;
    if let Some(o) = oracle {
        pass &= (r.extrapolated - o).abs() <= RESIDUE_TOL;
    }
    if normalized && r.method != Extrapolation::DegreeZero {
        pass &= r.spread <= SPREAD_TOL;
    }
    if r.residue_degree != 0 {
        pass &= r.extrapolated == 0.0;
    }
    SingularityEntry {
        point: r.point.clone(),
        eps: r.eps.clone(),
        per_eps: r.per_eps.clone(),
        extrapolated: r.extrapolated,
        imag: r.imag,
        spread: r.spread,
        method: r.method,
        residue_degree: r.residue_degree,
        oracle,
        pass,
    }
}

/// Compare a finished run with the scenario's oracle.
pub fn build_report(
    config: &RunConfig,
    scenario: &Scenario,
    state: &PipelineState,
    report: &ResidueReport,
    residue_config: &ResidueConfig,
    runtime: Runtime,
) -> chernweil::Result<ReportFile> {
    // The oracle is stated for the scenario's own polynomial; any other choice is only
    // held to the balance and the degree bookkeeping.
    let own_phi = report.phi == scenario.phi;
    let normalized = residue_config.profile.is_some();
    let singularities: Vec<SingularityEntry> = report
        .residues
        .iter()
        .enumerate()
        .map(|(k, r)| residue_entry(r, own_phi.then(|| scenario.oracle.residues[k]), normalized))
        .collect();
    let mut checks = vec![Check::new(
        "balance",
        report.balance,
        0.0,
        BALANCE_TOL,
        "lhs minus residue sum vanishes",
    )];
    if own_phi {
        checks.push(Check::new("lhs", report.lhs, scenario.oracle.lhs, BALANCE_TOL, scenario.oracle.provenance.clone()));
    }
    for (k, s) in singularities.iter().enumerate() {
        checks.push(Check {
            name: format!("residue[{k}]"),
            value: s.extrapolated,
            expected: s.oracle.unwrap_or(s.extrapolated),
            tolerance: RESIDUE_TOL,
            pass: s.pass,
            oracle: match (s.oracle, s.residue_degree) {
                (_, d) if d != 0 => "zero by form degree".into(),
                (Some(_), _) => "winding of the map around the point".into(),
                (None, _) => "no oracle for this polynomial".into(),
            },
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ReportFile {
        schema_version: SCHEMA_VERSION.into(),
        config: config.clone(),
        scenario: scenario.id.clone(),
        phi: report.phi.clone(),
        kind: report.kind,
        normalized,
        orientation: report.orientation.clone(),
        resolution: config.resolution,
        lhs: report.lhs,
        lhs_imag: report.lhs_imag,
        lhs_oracle: scenario.oracle.lhs,
        singularities,
        residue_sum: report.residue_sum,
        balance: report.balance,
        identity: report.identity.clone(),
        identity_fixed: FixedMaskResidual {
            radius: FIXED_MASK_RADIUS,
            residual: state.identity_with_radius(FIXED_MASK_RADIUS)?,
        },
        oracle_provenance: scenario.oracle.provenance.clone(),
        checks,
        pass,
        runtime,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub resolution: usize,
    pub balance_error: f64,
    pub identity_residual: f64,
    /// Previous balance error over this one; empty on the first level and when both
    /// errors are at round-off.
    pub ratio: Option<f64>,
}

pub fn write_csv(rows: &[ConvergenceRow], out: impl Write) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

pub fn human_summary(r: &ReportFile) -> String {
    let mut s = format!(
        "{} ({}, {:?}, res {}{})\n  lhs {:.6} (oracle {})\n",
        r.scenario,
        r.phi,
        r.kind,
        r.resolution,
        if r.normalized { ", normalized" } else { "" },
        r.lhs,
        r.lhs_oracle
    );
    for e in &r.singularities {
        s += &format!(
            "  residue at chart {} {:?}: {:.6} [{:?}, spread {:.2e}]{}\n",
            e.point.chart,
            e.point.coords,
            e.extrapolated,
            e.method,
            e.spread,
            e.oracle.map(|o| format!(" oracle {o}")).unwrap_or_default()
        );
    }
    s += &format!(
        "  balance {:.3e}; identity residual {:.3e} (mask), {:.3e} (radius {})\n",
        r.balance, r.identity.max, r.identity_fixed.residual.max, r.identity_fixed.radius
    );
    for c in &r.checks {
        s += &format!("  {} {}: {:.6} vs {} ± {:.0e}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.expected, c.tolerance);
    }
    s
}
