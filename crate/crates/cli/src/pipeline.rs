//! fit → decompose → report.

use mflo_core::cpd::{rank_sweep, CpOptions};
use mflo_core::fitting::optimize_with_restarts;
use mflo_core::{FitProblem, OptimizeOptions, TuckerState};

use crate::error::CliResult;
use crate::job::JobFile;
use crate::report::{CanonicalReport, FitReport, OrbitalReport};

/// The largest per-axis register a fit may use. Fits never build the full
/// grid, so this is far above the statevector guard.
pub const MAX_FIT_QUBITS: u32 = 30;

/// Per-orbital width-restart seed: orbitals get independent streams.
pub fn orbital_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn problem(job: &JobFile, name: &str) -> CliResult<FitProblem> {
    let cell = job.cell()?;
    mflo_core::basis::check_grid_budget("fit", cell.qubits_per_axis, MAX_FIT_QUBITS)?;
    Ok(FitProblem::new(job.orbital(name)?, cell, job.basis_spec(name)?, job.penalty(name))?.with_label(name))
}

pub fn optimize_options(job: &JobFile) -> OptimizeOptions {
    OptimizeOptions {
        max_iter: job.optimizer.max_iter,
        ..OptimizeOptions::default()
    }
}

pub fn cp_options(job: &JobFile, seed: u64) -> CpOptions {
    let cpd = job.cpd.as_ref();
    CpOptions {
        restarts: cpd.map_or(8, |c| c.restarts),
        seed: cpd.and_then(|c| c.seed).unwrap_or(seed),
        ..CpOptions::default()
    }
}

pub fn canonical_reports(tucker: &TuckerState, ranks: &[usize], opts: &CpOptions) -> CliResult<Vec<CanonicalReport>> {
    let states = rank_sweep(tucker, ranks, opts)?;
    ranks
        .iter()
        .zip(&states)
        .map(|(&r, c)| CanonicalReport::new(r, c))
        .collect()
}

/// Fits every orbital of `job` and sweeps the requested CP ranks.
/// `seed` overrides the job's seed.
pub fn run_fit(job: &JobFile, seed: Option<u64>) -> CliResult<FitReport> {
    job.validate()?;
    let seed = seed.unwrap_or(job.seed);
    let options = optimize_options(job);
    let mut orbitals = Vec::with_capacity(job.molecule.orbitals.len());
    for (i, o) in job.molecule.orbitals.iter().enumerate() {
        let p = problem(job, &o.name)?;
        let (tucker, restarts) = optimize_with_restarts(&p, &options, job.optimizer.restarts, orbital_seed(seed, i))?;
        let canonical = match &job.cpd {
            Some(cpd) => canonical_reports(&tucker, &cpd.ranks, &cp_options(job, seed))?,
            None => Vec::new(),
        };
        orbitals.push(OrbitalReport::new(&o.name, p.penalty_strength, &tucker, restarts, canonical)?);
    }
    Ok(FitReport {
        version: crate::report::REPORT_VERSION,
        seed,
        job: job.clone(),
        orbitals,
    })
}

/// Replaces the rank sweep of every orbital in `report`.
pub fn decompose(report: &mut FitReport, ranks: &[usize], restarts: usize, seed: Option<u64>) -> CliResult<()> {
    let n_qe = report.n_qe();
    let mut opts = cp_options(&report.job, seed.unwrap_or(report.seed));
    opts.restarts = restarts;
    if let Some(s) = seed {
        opts.seed = s;
    }
    for o in &mut report.orbitals {
        o.canonical = canonical_reports(&o.tucker(n_qe), ranks, &opts)?;
    }
    Ok(())
}

pub fn history_csv(o: &OrbitalReport) -> String {
    let mut s = String::from("step,fidelity\n");
    for (i, f) in o.diagnostics.history.iter().enumerate() {
        s.push_str(&format!("{i},{f:.17e}\n"));
    }
    s
}

pub fn rank_csv(o: &OrbitalReport) -> String {
    let mut s = String::from("rank,effective_rank,deviation,success_probability,cnot_total\n");
    for c in &o.canonical {
        s.push_str(&format!(
            "{},{},{:.17e},{:.17e},{}\n",
            c.requested_rank, c.rank, c.deviation, c.success_probability, c.cost.total
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job() -> JobFile {
        JobFile::from_str(include_str!("../examples/synthetic_two_gaussian.json")).unwrap()
    }

    #[test]
    fn single_function_basis() {
        let mut job = job();
        job.lorentzian.centers = Some(crate::job::PerAxis {
            x: vec![16],
            y: vec![16],
            z: vec![16],
        });
        job.lorentzian.box_generator = None;
        job.lorentzian.initial_widths = crate::job::InitialWidths::Uniform(0.5);
        job.cpd = None;
        let r = run_fit(&job, None).unwrap();
        let o = &r.orbitals[0];
        assert_eq!(o.core.dims(), [1, 1, 1]);
        assert!((o.core.as_slice()[0] - 1.0).abs() < 1e-12);
        assert_eq!(o.cost.ancillas.lorentzian, 0);
        assert_eq!(o.cost.total, 9 * 5 - 10);
        assert!(r.failed_checks().is_empty());
    }

    #[test]
    fn report_round_trips_and_is_deterministic() {
        let job = job();
        let a = run_fit(&job, None).unwrap();
        let text = a.to_json();
        let back = FitReport::from_json(&text).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_json(), text);
        assert_eq!(run_fit(&job, None).unwrap().to_json(), text);
        assert!(a.failed_checks().is_empty(), "{:?}", a.failed_checks());
    }

    #[test]
    fn decompose_reproduces_fit_sweep() {
        let job = job();
        let a = run_fit(&job, None).unwrap();
        let mut b = a.clone();
        let cpd = job.cpd.as_ref().unwrap();
        decompose(&mut b, &cpd.ranks, cpd.restarts, None).unwrap();
        assert_eq!(a, b);
    }
}
