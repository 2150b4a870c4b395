use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cpd::CanonicalState;
use crate::error::{arg, Result};
use crate::fitting::TuckerState;
use crate::lorentzian::{dot, Lorentzian1D};
use crate::tensor::{Kron3, Tensor3};

/// `ℙ = dᵀ S d / (n_prod ‖d‖²)`.
pub fn success_prob_from_core(core: &Tensor3, s: &Kron3) -> Result<f64> {
    let norm = core.norm_sq();
    if !(norm > 0.0) {
        return arg("core tensor is zero");
    }
    Ok(s.bilinear(core, core) / (core.len() as f64 * norm))
}

pub fn success_prob_tucker(tucker: &TuckerState) -> Result<f64> {
    success_prob_from_core(&tucker.core, &tucker.spec.overlap(tucker.n_qe)?)
}

/// `ℙ = ‖φ_canon‖² / (R n_prod Σ_r λ̃_r²)` with `λ̃_r = λ_r Π_ν ‖u_r^ν‖₂`.
pub fn success_prob_canonical(canon: &CanonicalState) -> Result<f64> {
    let n_prod = canon.spec.n_prod() as f64;
    let sum: f64 = (0..canon.rank)
        .map(|r| {
            let t = canon.lambda[r] * canon.factors.iter().map(|f| f.row(r).norm()).product::<f64>();
            t * t
        })
        .sum();
    if !(sum > 0.0) {
        return arg("canonical coefficients vanish");
    }
    Ok(canon.norm_sq / (canon.rank as f64 * n_prod * sum))
}

/// Orthogonal reflection whose first row is `w/‖w‖`.
pub fn householder_with_first_row(w: &[f64]) -> Result<DMatrix<f64>> {
    let n = w.len();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return arg("branch weights are all zero");
    }
    let mut v = DVector::from_iterator(n, w.iter().map(|x| -x / norm));
    v[0] += 1.0;
    let vv = v.norm_squared();
    if vv < 1e-30 {
        return Ok(DMatrix::identity(n, n));
    }
    Ok(DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / vv))
}

/// One LCU term: a weight and the state it prepares, given in a basis with
/// metric `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub weight: f64,
    pub state: Vec<f64>,
}

/// Post-selected LCU, simulated on the joint ancilla ⊗ system space.
///
/// The ancilla starts in a uniform superposition over the `J` branches,
/// branch `j` prepares its state normalized in the metric, and an
/// orthogonal map with first row `w/‖w‖` is applied to the ancilla. The
/// result is the squared metric norm of the ancilla-zero component.
pub fn lcu_postselect_oracle(branches: &[Branch], metric: &DMatrix<f64>) -> Result<f64> {
    if branches.is_empty() {
        return arg("at least one branch is required");
    }
    let dim = metric.nrows();
    if metric.ncols() != dim || branches.iter().any(|b| b.state.len() != dim) {
        return arg("branch states and metric disagree in dimension");
    }
    let j = branches.len();
    let mut joint = DMatrix::zeros(j, dim);
    for (row, b) in branches.iter().enumerate() {
        let v = DVector::from_column_slice(&b.state);
        let n2 = (v.transpose() * metric * &v)[0];
        if !(n2 > 0.0) {
            return arg(format!("branch {row} prepares a zero state"));
        }
        let scale = 1.0 / (n2.sqrt() * (j as f64).sqrt());
        for c in 0..dim {
            joint[(row, c)] = v[c] * scale;
        }
    }
    let weights: Vec<f64> = branches.iter().map(|b| b.weight).collect();
    let u = householder_with_first_row(&weights)?;
    let out = u * joint;
    let flagged = out.row(0).transpose();
    Ok((flagged.transpose() * metric * &flagged)[0])
}

/// Simulates the nested canonical-form LCU with the full joint register of
/// canonical and per-direction Lorentzian ancillae.
pub fn canonical_lcu_oracle(canon: &CanonicalState) -> Result<f64> {
    let s = canon.spec.overlap(canon.n_qe)?;
    let [nx, ny, nz] = s.dims();
    let rank = canon.rank;
    let n_prod = nx * ny * nz;
    // amplitudes[c][i][j][k] is a system vector in the product-LF basis
    let idx = |c: usize, i: usize, j: usize, k: usize| ((c * nx + i) * ny + j) * nz + k;
    let mut amp = DMatrix::<f64>::zeros(rank * n_prod, n_prod);
    let a0 = 1.0 / ((rank * n_prod) as f64).sqrt();
    for c in 0..rank {
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    amp[(idx(c, i, j, k), (i * ny + j) * nz + k)] = a0;
                }
            }
        }
    }
    // controlled factor encodings on each direction's ancilla
    for axis in 0..3 {
        let mut next = DMatrix::zeros(amp.nrows(), n_prod);
        for c in 0..rank {
            let row: Vec<f64> = canon.factors[axis].row(c).iter().copied().collect();
            let v = householder_with_first_row(&row)?;
            for i in 0..nx {
                for j in 0..ny {
                    for k in 0..nz {
                        let src = [i, j, k];
                        for p in 0..v.nrows() {
                            let mut dst = src;
                            dst[axis] = p;
                            let w = v[(p, src[axis])];
                            if w == 0.0 {
                                continue;
                            }
                            let (d, sidx) = (idx(c, dst[0], dst[1], dst[2]), idx(c, i, j, k));
                            for col in 0..n_prod {
                                next[(d, col)] += w * amp[(sidx, col)];
                            }
                        }
                    }
                }
            }
        }
        amp = next;
    }
    let tilde: Vec<f64> = (0..rank)
        .map(|r| canon.lambda[r] * canon.factors.iter().map(|f| f.row(r).norm()).product::<f64>())
        .collect();
    let v = householder_with_first_row(&tilde)?;
    let mut flagged = DVector::zeros(n_prod);
    for c in 0..rank {
        flagged += amp.row(idx(c, 0, 0, 0)).transpose() * v[(0, c)];
    }
    let dense = s.to_dense();
    Ok((flagged.transpose() * dense * &flagged)[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoCenterRow {
    pub theta: f64,
    pub probability: f64,
    pub bonding_approx: f64,
    pub antibonding_approx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoCenterTable {
    /// `⟨L_A|L_B⟩`
    pub overlap: f64,
    /// `1 − ⟨L_A|L_B⟩`
    pub delta: f64,
    pub rows: Vec<TwoCenterRow>,
}

impl TwoCenterTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,probability,bonding_approx,antibonding_approx\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.theta, r.probability, r.bonding_approx, r.antibonding_approx
            ));
        }
        out
    }
}

/// `ℙ(θ) = 1/2 + sin(2θ)⟨L_A|L_B⟩/2` for `cos θ |L_A⟩ + sin θ |L_B⟩`, with
/// the small-`δ` expansions around `θ = ±π/4`.
pub fn two_center_analysis(
    n: u32,
    a: f64,
    center_a: usize,
    center_b: usize,
    thetas: &[f64],
) -> Result<TwoCenterTable> {
    let la = Lorentzian1D::new(n, a, center_a)?;
    let lb = Lorentzian1D::new(n, a, center_b)?;
    let overlap = dot(&la.values, &lb.values);
    let delta = 1.0 - overlap;
    let rows = thetas
        .iter()
        .map(|&theta| {
            let db = theta - FRAC_PI_4;
            let da = theta + FRAC_PI_4;
            TwoCenterRow {
                theta,
                probability: 0.5 + (2.0 * theta).sin() * overlap / 2.0,
                bonding_approx: 1.0 - delta / 2.0 - db * db * (1.0 - delta),
                antibonding_approx: delta / 2.0 + da * da * (1.0 - delta),
            }
        })
        .collect();
    Ok(TwoCenterTable { overlap, delta, rows })
}
