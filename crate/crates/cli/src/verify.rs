//! The built-in invariant battery behind `mflo verify`.

use std::f64::consts::FRAC_PI_2;

use mflo_core::basis::build_ideal_state;
use mflo_core::cpd::{canonicalize, CpOptions};
use mflo_core::encoding::{
    cnot_count_canonical, cnot_count_tucker, lcu_postselect_oracle, success_prob_from_core,
    two_center_analysis, Branch,
};
use mflo_core::fitting::{fidelity_gradient, optimize_widths, tucker_statevector, FitDiagnostics};
use mflo_core::{
    AxisFunctions, ContractedGaussianAO, FitProblem, Kron3, Lorentzian1D, LorentzianBasisSpec,
    MolecularOrbital, OptimizeOptions, SimulationCell, Tensor3, TuckerState,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliResult;
use crate::job::JobFile;
use crate::pipeline::{problem, run_fit};

/// The synthetic two-Gaussian job the battery runs when no job is given.
pub const SYNTHETIC_JOB: &str = include_str!("../examples/synthetic_two_gaussian.json");

/// One published gate count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateRow {
    pub counts: [usize; 3],
    pub n_qe: u32,
    pub tucker: i64,
    pub sph: Option<i64>,
    /// `(R, total)` of the canonical form.
    pub canonical: Option<(usize, i64)>,
}

pub const GATE_TABLE: [GateRow; 5] = [
    GateRow { counts: [3, 3, 3], n_qe: 7, tucker: 305, sph: Some(243), canonical: Some((3, 281)) },
    GateRow { counts: [3, 4, 2], n_qe: 7, tucker: 231, sph: Some(201), canonical: Some((2, 215)) },
    GateRow { counts: [3, 3, 2], n_qe: 7, tucker: 231, sph: Some(201), canonical: Some((3, 231)) },
    GateRow { counts: [4, 2, 2], n_qe: 7, tucker: 173, sph: Some(159), canonical: Some((2, 169)) },
    GateRow { counts: [2, 1, 1], n_qe: 6, tucker: 63, sph: None, canonical: None },
];

/// Published H₂ core tensors and their success probabilities, `(d, ℙ)`.
pub const H2_CORES: [([f64; 2], f64); 2] = [([0.523, 0.581], 0.82), ([1.56, 1.55], 0.10)];

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    fn from_result(name: &str, r: CliResult<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

pub fn gate_counts(table: &[GateRow]) -> Outcome {
    let mut bad = Vec::new();
    for row in table {
        let t = match cnot_count_tucker(row.counts, row.n_qe) {
            Ok(t) => t,
            Err(e) => {
                bad.push(format!("{:?}: {e}", row.counts));
                continue;
            }
        };
        if t.total != row.tucker {
            bad.push(format!("{:?} Tucker {} != {}", row.counts, t.total, row.tucker));
        }
        if let Some(sph) = row.sph {
            if t.sph != sph {
                bad.push(format!("{:?} S-ph {} != {sph}", row.counts, t.sph));
            }
        }
        if let Some((rank, total)) = row.canonical {
            match cnot_count_canonical(row.counts, row.n_qe, rank) {
                Ok(c) if c.total == total => {}
                Ok(c) => bad.push(format!("{:?} R={rank} canonical {} != {total}", row.counts, c.total)),
                Err(e) => bad.push(format!("{:?}: {e}", row.counts)),
            }
        }
    }
    let detail = if bad.is_empty() {
        format!("{} rows exact", table.len())
    } else {
        bad.join("; ")
    };
    Outcome::new("gate_count_table", bad.is_empty(), detail)
}

/// `ℙ` of a normalized two-function core, with the metric off-diagonal
/// chosen so that `dᵀ S d = 1`.
pub fn printed_core_probability(d: [f64; 2]) -> CliResult<f64> {
    let off = (1.0 - d[0] * d[0] - d[1] * d[1]) / (2.0 * d[0] * d[1]);
    let s = Kron3::new([
        DMatrix::from_row_slice(2, 2, &[1.0, off, off, 1.0]),
        DMatrix::identity(1, 1),
        DMatrix::identity(1, 1),
    ]);
    Ok(success_prob_from_core(&Tensor3::from_vec([2, 1, 1], d.to_vec())?, &s)?)
}

pub fn printed_probabilities() -> Outcome {
    let r = (|| {
        let mut ok = true;
        let mut parts = Vec::new();
        for (d, published) in H2_CORES {
            let p = printed_core_probability(d)?;
            ok &= (p - published).abs() <= 0.005;
            parts.push(format!("{p:.4} vs {published}"));
        }
        Ok((ok, parts.join(", ")))
    })();
    Outcome::from_result("printed_core_probabilities", r)
}

pub fn two_center_oracle() -> Outcome {
    let r = (|| {
        let thetas: Vec<f64> = (0..21).map(|i| -FRAC_PI_2 + i as f64 * FRAC_PI_2 / 10.0).collect();
        let n = 5;
        let (ka, kb) = (12, 17);
        let metric = DMatrix::identity(1 << n, 1 << n);
        let mut worst = 0.0f64;
        for a in [0.5, 2.0] {
            let table = two_center_analysis(n, a, ka, kb, &thetas)?;
            let la = Lorentzian1D::new(n, a, ka)?.values;
            let lb = Lorentzian1D::new(n, a, kb)?.values;
            for row in &table.rows {
                // A branch with zero weight still prepares its state.
                let branches = [
                    Branch { weight: row.theta.cos(), state: la.clone() },
                    Branch { weight: row.theta.sin(), state: lb.clone() },
                ];
                let p = lcu_postselect_oracle(&branches, &metric)?;
                worst = worst.max((p - row.probability).abs());
            }
        }
        Ok((worst <= 1e-12, format!("max |ℙ − oracle| = {worst:.2e} over 42 points")))
    })();
    Outcome::from_result("two_center_oracle", r)
}

fn fd_gradient(p: &FitProblem) -> CliResult<Vec<f64>> {
    let w = p.spec.flat_widths();
    let mut out = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let h = 1e-5 * w[i];
        let f = |x: f64| -> CliResult<f64> {
            let mut v = w.clone();
            v[i] = x;
            Ok(p.evaluate(&p.spec.with_flat_widths(&v))?.fidelity())
        };
        out.push((f(w[i] + h)? - f(w[i] - h)?) / (2.0 * h));
    }
    Ok(out)
}

/// Worst relative error of the analytic gradient against central
/// differences over the configurations, as `‖g − g_fd‖∞ / ‖g_fd‖∞`.
pub fn gradient_error(base: &FitProblem, scales: &[f64], alphas: &[f64]) -> CliResult<f64> {
    let mut worst = 0.0f64;
    for &alpha in alphas {
        for &s in scales {
            let mut p = base.clone();
            p.penalty_strength = alpha;
            let w: Vec<f64> = base.spec.flat_widths().iter().map(|a| a * s).collect();
            p.spec = base.spec.with_flat_widths(&w);
            let g = fidelity_gradient(&p)?;
            let fd = fd_gradient(&p)?;
            let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let err = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(err / scale);
        }
    }
    Ok(worst)
}

pub fn gradient_check(job: &JobFile) -> Outcome {
    let r = (|| {
        let name = &job.molecule.orbitals[0].name;
        let worst = gradient_error(&problem(job, name)?, &[0.7, 1.0, 1.6], &[0.0, 0.1])?;
        Ok((worst <= 1e-5, format!("max relative error {worst:.2e} over 6 configurations")))
    })();
    Outcome::from_result("gradient_finite_difference", r)
}

/// Differences at the optimum of the first orbital: coefficient-space vs
/// statevector overlap, `dᵀSd − 1`, and `κ − |Σ T d|²`.
pub fn overlap_identities(job: &JobFile, max_qubits: u32) -> CliResult<(f64, f64, f64)> {
    let name = &job.molecule.orbitals[0].name;
    let p = problem(job, name)?;
    let t = optimize_widths(&p, &crate::pipeline::optimize_options(job))?;
    let (ideal, _) = build_ideal_state(&p.mo, &p.cell, max_qubits)?;
    let trial = tucker_statevector(&t.spec, &t.core, &p.cell, max_qubits)?;
    let coeff_overlap = t.squared_overlap.sqrt();
    let s = t.spec.overlap(t.n_qe)?;
    Ok((
        coeff_overlap - ideal.dot(&trial),
        s.bilinear(&t.core, &t.core) - 1.0,
        t.kappa_max - t.squared_overlap,
    ))
}

pub fn overlap_check(job: &JobFile, max_qubits: u32) -> Outcome {
    let r = (|| {
        let (a, b, c) = overlap_identities(job, max_qubits)?;
        let ok = a.abs() <= 1e-8 && b.abs() <= 1e-10 && c.abs() <= 1e-10;
        Ok((ok, format!("overlap {a:.1e}, normalization {b:.1e}, eigenvalue {c:.1e}")))
    })();
    Outcome::from_result("fidelity_oracle", r)
}

/// A random normalized core on a 3×3×3 basis.
pub fn random_tucker(seed: u64) -> CliResult<TuckerState> {
    let n_qe = 5;
    let axis = |c: [usize; 3], w: [f64; 3]| AxisFunctions {
        widths: w.to_vec(),
        centers: c.to_vec(),
    };
    let spec = LorentzianBasisSpec::new([
        axis([10, 16, 22], [0.4, 0.6, 0.5]),
        axis([14, 16, 18], [0.3, 0.8, 0.5]),
        axis([16, 16, 12], [0.2, 0.9, 0.7]),
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut core = Tensor3::from_vec([3, 3, 3], (0..27).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let s = spec.overlap(n_qe)?;
    core.scale(1.0 / s.bilinear(&core, &core).sqrt());
    Ok(TuckerState {
        n_qe,
        spec,
        core,
        fidelity: 0.0,
        squared_overlap: 0.0,
        penalty: 0.0,
        kappa_max: 0.0,
        norm_factor: 1.0,
        diagnostics: FitDiagnostics {
            iterations: 0,
            converged: true,
            final_grad_norm: 0.0,
            history: Vec::new(),
            eigen_residual: 0.0,
            flags: Vec::new(),
        },
    })
}

pub fn cp_exactness() -> Outcome {
    let r = (|| {
        let t = random_tucker(7)?;
        let c = canonicalize(&t, 27, &CpOptions::default())?;
        Ok((c.deviation < 1e-10, format!("R = 27 deviation {:.2e}", c.deviation)))
    })();
    Outcome::from_result("cp_full_rank_exact", r)
}

/// Deviations along a rank sweep `1..=n_prod` of the first orbital's fit.
pub fn sweep_deviations(job: &JobFile) -> CliResult<Vec<f64>> {
    let name = &job.molecule.orbitals[0].name;
    let p = problem(job, name)?;
    let t = optimize_widths(&p, &crate::pipeline::optimize_options(job))?;
    let ranks: Vec<usize> = (1..=t.spec.n_prod()).collect();
    let opts = CpOptions {
        restarts: 8,
        seed: job.seed,
        ..CpOptions::default()
    };
    Ok(mflo_core::cpd::rank_sweep(&t, &ranks, &opts)?
        .iter()
        .map(|c| c.deviation)
        .collect())
}

pub fn cp_monotone(job: &JobFile) -> Outcome {
    let r = (|| {
        let dev = sweep_deviations(job)?;
        let ok = dev.windows(2).all(|w| w[1] <= w[0]);
        let last = *dev.last().expect("n_prod ≥ 1");
        Ok((ok, format!("{} ranks, deviation {:.2e} → {last:.2e}", dev.len(), dev[0])))
    })();
    Outcome::from_result("cp_rank_sweep_monotone", r)
}

/// A normalized s Gaussian at the origin and one Lorentzian per axis on a
/// 32³ grid of 8 bohr.
pub fn single_gaussian_problem(gamma: f64, width: f64) -> CliResult<FitProblem> {
    let ao = ContractedGaussianAO::from_normalized_primitives(vec![gamma], vec![1.0], [0, 0, 0], [0.0; 3])?;
    let mo = MolecularOrbital::new(vec![ao], vec![1.0])?;
    let cell = SimulationCell::cube([-4.0; 3], 8.0, 5)?;
    let axis = || AxisFunctions { widths: vec![width], centers: vec![16] };
    Ok(FitProblem::new(mo, cell, LorentzianBasisSpec::new([axis(), axis(), axis()]), 0.0)?)
}

pub const SINGLE_GAUSSIAN_EXPONENT: f64 = 16.0;

/// Best squared overlap of a common-width scan, and of the optimizer.
pub fn single_gaussian_overlaps() -> CliResult<(f64, f64)> {
    let p = single_gaussian_problem(SINGLE_GAUSSIAN_EXPONENT, 1.0)?;
    let mut scan = 0.0f64;
    for i in 0..=400 {
        let a = 1e-3 * (5e4f64).powf(i as f64 / 400.0);
        let spec = p.spec.with_flat_widths(&[a; 3]);
        scan = scan.max(p.evaluate(&spec)?.solution.squared_overlap());
    }
    let fit = optimize_widths(&p, &OptimizeOptions::default())?;
    Ok((scan, fit.squared_overlap))
}

pub fn single_gaussian() -> Outcome {
    let r = (|| {
        let (scan, fit) = single_gaussian_overlaps()?;
        let ok = scan > 0.95 && fit > 0.95 && fit >= scan - 1e-6;
        Ok((ok, format!("scan {scan:.6}, optimizer {fit:.6}")))
    })();
    Outcome::from_result("single_gaussian_overlap", r)
}

fn monotone(history: &[f64]) -> bool {
    history.windows(2).all(|w| w[1] >= w[0])
}

/// Fits `job` twice; checks determinism, monotone histories, ℙ ∈ (0, 1] and
/// the identities embedded in the report.
pub fn job_checks(job: &JobFile, label: &str) -> Vec<Outcome> {
    let first = run_fit(job, None);
    let second = run_fit(job, None);
    let (a, b) = match (first, second) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            return vec![Outcome::new(&format!("{label}/fit"), false, format!("error: {e}"))];
        }
    };
    let failed = a.failed_checks();
    let histories = a.orbitals.iter().all(|o| monotone(&o.diagnostics.history));
    let probs = a.orbitals.iter().all(|o| o.success_probability > 0.0 && o.success_probability <= 1.0);
    let summary: Vec<String> = a
        .orbitals
        .iter()
        .map(|o| format!("{}: F {:.4}, ℙ {:.4}", o.name, o.fidelity, o.success_probability))
        .collect();
    vec![
        Outcome::new(
            &format!("{label}/report_identities"),
            failed.is_empty(),
            if failed.is_empty() { summary.join("; ") } else { failed.join(", ") },
        ),
        Outcome::new(&format!("{label}/fidelity_non_decreasing"), histories, String::new()),
        Outcome::new(&format!("{label}/success_probability_range"), probs, String::new()),
        Outcome::new(&format!("{label}/deterministic"), a.to_json() == b.to_json(), String::new()),
    ]
}

/// Runs the full battery. `job` defaults to the synthetic two-Gaussian
/// example.
pub fn run_battery(table: &[GateRow], job: Option<&JobFile>, max_qubits: u32) -> Vec<Outcome> {
    let synthetic = JobFile::from_str(SYNTHETIC_JOB).expect("bundled job is valid");
    let mut out = vec![
        gate_counts(table),
        printed_probabilities(),
        two_center_oracle(),
        gradient_check(&synthetic),
        overlap_check(&synthetic, max_qubits),
        cp_exactness(),
        cp_monotone(&synthetic),
        single_gaussian(),
    ];
    out.extend(job_checks(&synthetic, "synthetic"));
    if let Some(j) = job {
        out.extend(job_checks(j, &j.name));
    }
    out
}

pub fn format_table(outcomes: &[Outcome]) -> String {
    let width = outcomes.iter().map(|o| o.name.chars().count()).max().unwrap_or(0);
    let mut s = String::new();
    for o in outcomes {
        let pad = width - o.name.chars().count();
        s.push_str(&format!(
            "{}{}  {}  {}\n",
            o.name,
            " ".repeat(pad),
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_passes_and_detects_mutation() {
        assert!(gate_counts(&GATE_TABLE).passed);
        let mut t = GATE_TABLE;
        t[2].canonical = Some((3, 230));
        let o = gate_counts(&t);
        assert!(!o.passed);
        assert!(o.detail.contains("230"));
        let mut t = GATE_TABLE;
        t[4].tucker = 64;
        assert!(!gate_counts(&t).passed);
    }

    #[test]
    fn printed_cores() {
        let p: Vec<f64> = H2_CORES.iter().map(|(d, _)| printed_core_probability(*d).unwrap()).collect();
        assert!((p[0] - 1.0 / (2.0 * (0.523f64.powi(2) + 0.581f64.powi(2)))).abs() < 1e-12);
        assert!((p[1] - 1.0 / (2.0 * (1.56f64.powi(2) + 1.55f64.powi(2)))).abs() < 1e-12);
        assert!(printed_probabilities().passed);
    }

    #[test]
    fn table_formatting() {
        let t = format_table(&[
            Outcome::new("a", true, "x".into()),
            Outcome::new("long_name", false, String::new()),
        ]);
        assert_eq!(t, "a          PASS  x\nlong_name  FAIL  \n");
    }
}
