//! Ancilla and CNOT counts of the probabilistic state-preparation circuits,
//! and their post-selection success probabilities.
//!
//! Counts exclude the QFT on the data registers. Every count is a signed
//! integer because the closed forms evaluate to `−1` for the amplitude
//! encoding when a register has no ancilla at all.

mod probability;

pub use probability::{
    canonical_lcu_oracle, householder_with_first_row, lcu_postselect_oracle,
    success_prob_canonical, success_prob_from_core, success_prob_tucker, two_center_analysis,
    Branch, TwoCenterRow, TwoCenterTable,
};

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// `⌈log₂ n⌉` for `n ≥ 1`.
pub fn ceil_log2(n: usize) -> u32 {
    debug_assert!(n >= 1);
    usize::BITS - (n - 1).leading_zeros()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AncillaCounts {
    /// `n_Aν = ⌈log₂ n_Lν⌉`
    pub per_axis: [u32; 3],
    /// `n_A^(L) = Σ_ν n_Aν`
    pub lorentzian: u32,
    /// `n_A^(c) = ⌈log₂ R⌉`
    pub canonical: Option<u32>,
}

pub fn ancilla_counts(counts: [usize; 3], rank: Option<usize>) -> Result<AncillaCounts> {
    if let Some(i) = counts.iter().position(|&n| n == 0) {
        return arg(format!("axis {i} has no Lorentzians"));
    }
    if rank == Some(0) {
        return arg("rank must be at least 1");
    }
    let per_axis = counts.map(ceil_log2);
    Ok(AncillaCounts {
        per_axis,
        lorentzian: per_axis.iter().sum(),
        canonical: rank.map(ceil_log2),
    })
}

fn check_qubits(n_qe: u32) -> Result<()> {
    if !(1..=40).contains(&n_qe) {
        return arg(format!("qubits per axis must lie in [1, 40], got {n_qe}"));
    }
    Ok(())
}

fn checked_pow2(e: u32) -> Result<i64> {
    if e > 60 {
        return arg(format!("2^{e} overflows the gate counter"));
    }
    Ok(1i64 << e)
}

/// CNOTs of one direction of the Slater-function and phase block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphAxisCost {
    /// `n_qe` uniformly controlled rotations on `n_Aν + 1` qubits.
    pub rotations: i64,
    /// `n_qe` diagonal shift unitaries on `n_Aν + 1` qubits.
    pub shifts: i64,
    /// Consecutive CNOTs across the data register.
    pub cnot_chain: i64,
}

impl SphAxisCost {
    pub fn total(&self) -> i64 {
        self.rotations + self.shifts + self.cnot_chain
    }
}

pub fn sph_axis_cost(n_a: u32, n_qe: u32) -> Result<SphAxisCost> {
    let ucr = checked_pow2(n_a)?;
    let n = n_qe as i64;
    Ok(SphAxisCost {
        rotations: n * ucr,
        shifts: n * (2 * ucr - 2),
        cnot_chain: 2 * n - 3,
    })
}

/// `U_amp` on an `n`-qubit register: `2^n − 2`.
pub fn amplitude_encoding_cnots(n: u32) -> Result<i64> {
    Ok(checked_pow2(n)? - 2)
}

/// Canonical-factor encoding for one direction: one UCR with `n_A^(c) + k`
/// controls for each `k < n_Aν`.
pub fn canonical_axis_cnots(n_a: u32, n_ac: u32) -> Result<i64> {
    (0..n_a).try_fold(0i64, |acc, k| Ok(acc + checked_pow2(n_ac + k)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Tucker,
    Canonical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitCostReport {
    pub form: Form,
    pub lorentzian_counts: [usize; 3],
    pub n_qe: u32,
    pub rank: Option<usize>,
    pub ancillas: AncillaCounts,
    pub sph_per_axis: [SphAxisCost; 3],
    /// Slater functions and phases, shared by both forms.
    pub sph: i64,
    /// Amplitude encoding: of `d` (Tucker) or of `λ̃` and the factors
    /// (canonical).
    pub amp: i64,
    pub total: i64,
    /// Standard QFT on the three data registers (`n(n−1)` CNOTs for the
    /// controlled phases plus three per swap). Informational only; not part
    /// of `total`.
    pub qft_cnots: i64,
    pub success_probability: Option<f64>,
}

fn qft_cnots(n_qe: u32) -> i64 {
    let n = n_qe as i64;
    3 * (n * (n - 1) + 3 * (n / 2))
}

/// `N_CX = 2^{n_A^(L)} − 11 + 3 n_qe Σ_ν 2^{n_Aν}`.
pub fn tucker_total_closed_form(anc: &AncillaCounts, n_qe: u32) -> Result<i64> {
    let sum: i64 = anc.per_axis.iter().map(|&a| checked_pow2(a)).sum::<Result<i64>>()?;
    Ok(checked_pow2(anc.lorentzian)? - 11 + 3 * n_qe as i64 * sum)
}

/// `N_CX = −2^{n_A^(c)+1} − 11 + (3 n_qe + 2^{n_A^(c)}) Σ_ν 2^{n_Aν}`.
pub fn canonical_total_closed_form(anc: &AncillaCounts, n_qe: u32) -> Result<i64> {
    let Some(c) = anc.canonical else {
        return arg("canonical count needs a rank");
    };
    let sum: i64 = anc.per_axis.iter().map(|&a| checked_pow2(a)).sum::<Result<i64>>()?;
    Ok(-checked_pow2(c + 1)? - 11 + (3 * n_qe as i64 + checked_pow2(c)?) * sum)
}

fn sph_block(anc: &AncillaCounts, n_qe: u32) -> Result<([SphAxisCost; 3], i64)> {
    let per = [
        sph_axis_cost(anc.per_axis[0], n_qe)?,
        sph_axis_cost(anc.per_axis[1], n_qe)?,
        sph_axis_cost(anc.per_axis[2], n_qe)?,
    ];
    let sph = per.iter().map(SphAxisCost::total).sum();
    Ok((per, sph))
}

/// Tucker-form counts, assembled from the circuit components.
pub fn cnot_count_tucker(counts: [usize; 3], n_qe: u32) -> Result<CircuitCostReport> {
    check_qubits(n_qe)?;
    let ancillas = ancilla_counts(counts, None)?;
    let (sph_per_axis, sph) = sph_block(&ancillas, n_qe)?;
    let amp = amplitude_encoding_cnots(ancillas.lorentzian)?;
    Ok(CircuitCostReport {
        form: Form::Tucker,
        lorentzian_counts: counts,
        n_qe,
        rank: None,
        ancillas,
        sph_per_axis,
        sph,
        amp,
        total: sph + amp,
        qft_cnots: qft_cnots(n_qe),
        success_probability: None,
    })
}

/// Canonical-form counts, assembled from the circuit components.
pub fn cnot_count_canonical(counts: [usize; 3], n_qe: u32, rank: usize) -> Result<CircuitCostReport> {
    check_qubits(n_qe)?;
    let ancillas = ancilla_counts(counts, Some(rank))?;
    let c = ancillas.canonical.expect("rank given");
    let (sph_per_axis, sph) = sph_block(&ancillas, n_qe)?;
    let mut amp = amplitude_encoding_cnots(c)?;
    for &a in &ancillas.per_axis {
        amp += canonical_axis_cnots(a, c)?;
    }
    Ok(CircuitCostReport {
        form: Form::Canonical,
        lorentzian_counts: counts,
        n_qe,
        rank: Some(rank),
        ancillas,
        sph_per_axis,
        sph,
        amp,
        total: sph + amp,
        qft_cnots: qft_cnots(n_qe),
        success_probability: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// (n_L, R, Tucker total, S-ph, canonical total) at n_qe = 7.
    const TABLE: [([usize; 3], usize, i64, i64, i64); 4] = [
        ([3, 3, 3], 3, 305, 243, 281),
        ([3, 4, 2], 2, 231, 201, 215),
        ([3, 3, 2], 3, 231, 201, 231),
        ([4, 2, 2], 2, 173, 159, 169),
    ];

    #[test]
    fn ceil_log2_values() {
        let got: Vec<u32> = (1..=9).map(ceil_log2).collect();
        assert_eq!(got, vec![0, 1, 2, 2, 3, 3, 3, 3, 4]);
    }

    #[test]
    fn ancillas() {
        let a = ancilla_counts([3, 3, 3], Some(3)).unwrap();
        assert_eq!(a.per_axis, [2, 2, 2]);
        assert_eq!(a.lorentzian, 6);
        assert_eq!(a.canonical, Some(2));
        assert_eq!(ancilla_counts([1, 1, 1], None).unwrap().lorentzian, 0);
        assert!(ancilla_counts([0, 1, 1], None).is_err());
        assert!(ancilla_counts([1, 1, 1], Some(0)).is_err());
    }

    #[test]
    fn table_counts() {
        for (counts, rank, tucker, sph, canon) in TABLE {
            let t = cnot_count_tucker(counts, 7).unwrap();
            assert_eq!((t.total, t.sph), (tucker, sph), "{counts:?}");
            let c = cnot_count_canonical(counts, 7, rank).unwrap();
            assert_eq!(c.total, canon, "{counts:?}");
            assert_eq!(c.sph, sph);
        }
        assert_eq!(cnot_count_tucker([2, 1, 1], 6).unwrap().total, 63);
    }

    #[test]
    fn components_match_closed_forms() {
        for nx in 1..=9 {
            for ny in 1..=5 {
                for nz in 1..=4 {
                    for n_qe in [1, 2, 6, 7, 10] {
                        let c = [nx, ny, nz];
                        let t = cnot_count_tucker(c, n_qe).unwrap();
                        assert_eq!(t.total, tucker_total_closed_form(&t.ancillas, n_qe).unwrap());
                        for rank in 1..=9 {
                            let k = cnot_count_canonical(c, n_qe, rank).unwrap();
                            assert_eq!(k.total, canonical_total_closed_form(&k.ancillas, n_qe).unwrap());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn amplitude_encoding_is_a_sum_of_ucrs() {
        for n in 1..12u32 {
            let sum: i64 = (1..n).map(|k| 1i64 << k).sum();
            assert_eq!(amplitude_encoding_cnots(n).unwrap(), sum);
        }
    }

    #[test]
    fn no_ancilla_edge() {
        let t = cnot_count_tucker([1, 1, 1], 6).unwrap();
        assert_eq!(t.amp, -1);
        assert_eq!(t.total, 9 * 6 - 10);
        assert_eq!(t.total, t.sph + t.amp);
    }

    #[test]
    fn bad_inputs() {
        assert!(cnot_count_tucker([1, 1, 1], 0).is_err());
        assert!(cnot_count_canonical([2, 2, 2], 5, 0).is_err());
    }
}
