//! The JSON fit report and the identities re-checked whenever one is built.

use mflo_core::cpd::CanonicalState;
use mflo_core::encoding::{
    canonical_lcu_oracle, cnot_count_canonical, cnot_count_tucker, lcu_postselect_oracle,
    success_prob_canonical, success_prob_tucker, Branch, CircuitCostReport,
};
use mflo_core::fitting::{FitDiagnostics, RestartSummary};
use mflo_core::{LorentzianBasisSpec, Tensor3, TuckerState};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::job::JobFile;

pub const REPORT_VERSION: u32 = 1;

/// Tolerance of the normalization and eigenvalue identities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Tolerance between closed-form success probabilities and the LCU oracles.
pub const ORACLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value.abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub version: u32,
    pub seed: u64,
    pub job: JobFile,
    pub orbitals: Vec<OrbitalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitalReport {
    pub name: String,
    pub penalty_strength: f64,
    /// Optimized widths and their centers.
    pub basis: LorentzianBasisSpec,
    pub core: Tensor3,
    pub norm_factor: f64,
    pub squared_overlap: f64,
    pub fidelity: f64,
    pub penalty: f64,
    pub kappa_max: f64,
    pub success_probability: f64,
    pub cost: CircuitCostReport,
    pub diagnostics: FitDiagnostics,
    pub restarts: RestartSummary,
    pub canonical: Vec<CanonicalReport>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalReport {
    pub requested_rank: usize,
    /// Rank after dropping vanishing components.
    pub rank: usize,
    pub deviation: f64,
    pub lambda: Vec<f64>,
    /// Metric-normalized factors per direction, one row per component.
    pub factors: [Vec<Vec<f64>>; 3],
    /// Unnormalized ALS factors, same layout.
    pub raw_factors: [Vec<Vec<f64>>; 3],
    pub overlap: f64,
    pub norm_sq: f64,
    pub success_probability: f64,
    pub cost: CircuitCostReport,
    pub als_sweeps: usize,
    pub als_residual: f64,
    pub regularized: bool,
    pub dropped: usize,
    pub checks: Vec<Check>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], ncols: usize) -> CliResult<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::schema("", "factor rows disagree with the basis size"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn tucker_branches(core: &Tensor3) -> Vec<Branch> {
    let n = core.len();
    (0..n)
        .map(|l| {
            let mut e = vec![0.0; n];
            e[l] = 1.0;
            Branch {
                weight: core.as_slice()[l],
                state: e,
            }
        })
        .collect()
}

/// Normalization, eigenvalue and probability identities of a Tucker fit.
pub fn tucker_checks(t: &TuckerState, success_probability: f64) -> CliResult<Vec<Check>> {
    let s = t.spec.overlap(t.n_qe)?;
    let norm = s.bilinear(&t.core, &t.core);
    let mut checks = vec![
        Check::new("core_normalization", norm - 1.0, IDENTITY_TOL),
        Check::new("kappa_equals_squared_overlap", t.kappa_max - t.squared_overlap, IDENTITY_TOL),
        Check::new("kappa_equals_fidelity_plus_penalty", t.kappa_max - (t.fidelity + t.penalty), IDENTITY_TOL),
    ];
    let oracle = lcu_postselect_oracle(&tucker_branches(&t.core), &s.to_dense())?;
    checks.push(Check::new("tucker_probability_oracle", success_probability - oracle, ORACLE_TOL));
    Ok(checks)
}

pub fn canonical_checks(c: &CanonicalState, success_probability: f64) -> CliResult<Vec<Check>> {
    let oracle = canonical_lcu_oracle(c)?;
    Ok(vec![Check::new("canonical_probability_oracle", success_probability - oracle, ORACLE_TOL)])
}

impl CanonicalReport {
    pub fn new(requested_rank: usize, c: &CanonicalState) -> CliResult<Self> {
        let success_probability = success_prob_canonical(c)?;
        let mut cost = cnot_count_canonical(c.spec.counts(), c.n_qe, c.rank)?;
        cost.success_probability = Some(success_probability);
        Ok(Self {
            requested_rank,
            rank: c.rank,
            deviation: c.deviation,
            lambda: c.lambda.clone(),
            factors: c.factors.each_ref().map(rows),
            raw_factors: c.raw.each_ref().map(rows),
            overlap: c.overlap,
            norm_sq: c.norm_sq,
            success_probability,
            cost,
            als_sweeps: c.als_sweeps,
            als_residual: c.als_residual,
            regularized: c.regularized,
            dropped: c.dropped,
            checks: canonical_checks(c, success_probability)?,
        })
    }

    pub fn state(&self, spec: &LorentzianBasisSpec, n_qe: u32) -> CliResult<CanonicalState> {
        let counts = spec.counts();
        let mut factors = Vec::with_capacity(3);
        let mut raw = Vec::with_capacity(3);
        for a in 0..3 {
            factors.push(matrix(&self.factors[a], counts[a])?);
            raw.push(matrix(&self.raw_factors[a], counts[a])?);
        }
        Ok(CanonicalState {
            n_qe,
            spec: spec.clone(),
            rank: self.rank,
            raw: raw.try_into().expect("three axes"),
            factors: factors.try_into().expect("three axes"),
            lambda: self.lambda.clone(),
            deviation: self.deviation,
            overlap: self.overlap,
            norm_sq: self.norm_sq,
            als_residual: self.als_residual,
            als_sweeps: self.als_sweeps,
            regularized: self.regularized,
            dropped: self.dropped,
        })
    }
}

impl OrbitalReport {
    pub fn new(
        name: &str,
        penalty_strength: f64,
        t: &TuckerState,
        restarts: RestartSummary,
        canonical: Vec<CanonicalReport>,
    ) -> CliResult<Self> {
        let success_probability = success_prob_tucker(t)?;
        let mut cost = cnot_count_tucker(t.spec.counts(), t.n_qe)?;
        cost.success_probability = Some(success_probability);
        Ok(Self {
            name: name.into(),
            penalty_strength,
            basis: t.spec.clone(),
            core: t.core.clone(),
            norm_factor: t.norm_factor,
            squared_overlap: t.squared_overlap,
            fidelity: t.fidelity,
            penalty: t.penalty,
            kappa_max: t.kappa_max,
            success_probability,
            cost,
            diagnostics: t.diagnostics.clone(),
            restarts,
            canonical,
            checks: tucker_checks(t, success_probability)?,
        })
    }

    pub fn tucker(&self, n_qe: u32) -> TuckerState {
        TuckerState {
            n_qe,
            spec: self.basis.clone(),
            core: self.core.clone(),
            fidelity: self.fidelity,
            squared_overlap: self.squared_overlap,
            penalty: self.penalty,
            kappa_max: self.kappa_max,
            norm_factor: self.norm_factor,
            diagnostics: self.diagnostics.clone(),
        }
    }
}

impl FitReport {
    pub fn n_qe(&self) -> u32 {
        self.job.cell.qubits_per_axis
    }

    pub fn orbital(&self, name: &str) -> CliResult<&OrbitalReport> {
        self.orbitals
            .iter()
            .find(|o| o.name == name)
            .ok_or_else(|| CliError::schema("/orbitals", format!("report has no orbital named '{name}'")))
    }

    /// Names of embedded checks that did not pass.
    pub fn failed_checks(&self) -> Vec<String> {
        let mut out = Vec::new();
        for o in &self.orbitals {
            for c in o.checks.iter().filter(|c| !c.passed) {
                out.push(format!("{}/{}", o.name, c.name));
            }
            for r in &o.canonical {
                for c in r.checks.iter().filter(|c| !c.passed) {
                    out.push(format!("{}/rank{}/{}", o.name, r.requested_rank, c.name));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let r: FitReport = crate::job::parse_json(text)?;
        r.job.validate()?;
        Ok(r)
    }
}
