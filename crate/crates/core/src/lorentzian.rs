//! Discrete Lorentzian functions on a periodic `2^n`-point grid.
//!
//! The unnormalized profile is
//!
//! ```text
//! ℓ_k(a) = (1 − e^{−2a}) (1 − (−1)^k e^{−aN/2}) / (1 − 2 e^{−a} cos(2πk/N) + e^{−2a})
//! ```
//!
//! and the normalized profile is `L_k = ℓ_k / ‖ℓ‖`. The normalization
//! constant `C_S` is reported in the `C_S/√N` convention, i.e.
//! `C_S = √N / ‖ℓ‖`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::tensor::{Axis, Kron3};

/// Grid points at each end of the axis that count toward [`boundary_mass`].
pub const BOUNDARY_POINTS: usize = 3;

/// Boundary mass above which a fitted function is flagged.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct LorentzProfile {
    pub values: Vec<f64>,
    pub norm_const: f64,
}

fn check_args(n: u32, a: f64) -> Result<()> {
    if n == 0 || n > 30 {
        return arg(format!("qubit count must be in 1..=30, got {n}"));
    }
    if !(a > 0.0) || !a.is_finite() {
        return arg(format!("Lorentzian width must be positive and finite, got {a}"));
    }
    Ok(())
}

/// Unnormalized profile and its width derivative.
fn raw_profile(n: u32, a: f64, with_derivative: bool) -> (Vec<f64>, Vec<f64>) {
    let big_n = 1usize << n;
    let ea = (-a).exp();
    let e2a = ea * ea;
    let one_minus_e2a = -(-2.0 * a).exp_m1();
    let one_minus_ea_sq = (-a).exp_m1().powi(2);
    let half = (-a * big_n as f64 / 2.0).exp();
    let dhalf = -(big_n as f64 / 2.0) * half;

    let mut val = Vec::with_capacity(big_n);
    let mut der = Vec::with_capacity(if with_derivative { big_n } else { 0 });
    for k in 0..big_n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let sin = (std::f64::consts::PI * k as f64 / big_n as f64).sin();
        // 1 − 2e^{−a}cos θ + e^{−2a} = (1 − e^{−a})² + 4e^{−a} sin²(θ/2)
        let den = one_minus_ea_sq + 4.0 * ea * sin * sin;
        let tail = 1.0 - sign * half;
        let num = one_minus_e2a * tail;
        val.push(num / den);
        if with_derivative {
            let cos = 1.0 - 2.0 * sin * sin;
            let dnum = 2.0 * e2a * tail - one_minus_e2a * sign * dhalf;
            let dden = 2.0 * ea * cos - 2.0 * e2a;
            der.push((dnum * den - num * dden) / (den * den));
        }
    }
    (val, der)
}

/// Normalized Lorentzian profile centered at the origin.
pub fn lf_profile(n: u32, a: f64) -> Result<LorentzProfile> {
    check_args(n, a)?;
    let (raw, _) = raw_profile(n, a, false);
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let values = raw.iter().map(|v| v / norm).collect();
    Ok(LorentzProfile {
        values,
        norm_const: ((1usize << n) as f64).sqrt() / norm,
    })
}

/// `∂L_k/∂a` of the normalized profile, including the variation of the
/// normalization constant.
pub fn lf_profile_da(n: u32, a: f64) -> Result<Vec<f64>> {
    check_args(n, a)?;
    let (raw, draw) = raw_profile(n, a, true);
    let norm_sq: f64 = raw.iter().map(|v| v * v).sum();
    let norm = norm_sq.sqrt();
    let proj: f64 = raw.iter().zip(&draw).map(|(v, d)| v * d).sum::<f64>() / norm_sq;
    Ok(raw
        .iter()
        .zip(&draw)
        .map(|(v, d)| (d - v * proj) / norm)
        .collect())
}

/// Cyclic shift: `out[k] = v[(k − center) mod N]`.
pub fn shift(values: &[f64], center: usize) -> Vec<f64> {
    let n = values.len();
    (0..n).map(|k| values[(k + n - center % n) % n]).collect()
}

/// A normalized Lorentzian state centered at grid index `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lorentzian1D {
    pub n: u32,
    pub width: f64,
    pub center: usize,
    pub values: Vec<f64>,
    pub norm_const: f64,
}

impl Lorentzian1D {
    pub fn new(n: u32, width: f64, center: usize) -> Result<Self> {
        check_args(n, width)?;
        if center >= 1usize << n {
            return arg(format!("center {center} outside [0, {})", 1usize << n));
        }
        let p = lf_profile(n, width)?;
        Ok(Self {
            n,
            width,
            center,
            values: shift(&p.values, center),
            norm_const: p.norm_const,
        })
    }

    pub fn width_derivative(&self) -> Vec<f64> {
        // check_args already passed in new()
        shift(&lf_profile_da(self.n, self.width).unwrap(), self.center)
    }

    pub fn boundary_mass(&self) -> f64 {
        boundary_mass(&self.values)
    }
}

/// `|L; a, k_c⟩` as a plain vector.
pub fn lf_state(n: u32, a: f64, center: usize) -> Result<Vec<f64>> {
    Lorentzian1D::new(n, a, center).map(|l| l.values)
}

/// Squared weight of `values` within [`BOUNDARY_POINTS`] of either end.
pub fn boundary_mass(values: &[f64]) -> f64 {
    let n = values.len();
    let b = BOUNDARY_POINTS.min(n / 2);
    values[..b]
        .iter()
        .chain(&values[n - b..])
        .map(|v| v * v)
        .sum()
}

/// Widths and centers of the Lorentzians along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisFunctions {
    pub widths: Vec<f64>,
    pub centers: Vec<usize>,
}

impl AxisFunctions {
    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }
}

/// Per-axis Lorentzian parameters of a product basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianBasisSpec {
    pub axes: [AxisFunctions; 3],
}

impl LorentzianBasisSpec {
    pub fn new(axes: [AxisFunctions; 3]) -> Self {
        Self { axes }
    }

    pub fn axis(&self, axis: Axis) -> &AxisFunctions {
        &self.axes[axis.index()]
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    pub fn n_prod(&self) -> usize {
        self.counts().iter().product()
    }

    pub fn n_widths(&self) -> usize {
        self.counts().iter().sum()
    }

    /// Widths flattened x, then y, then z.
    pub fn flat_widths(&self) -> Vec<f64> {
        self.axes.iter().flat_map(|a| a.widths.iter().copied()).collect()
    }

    pub fn with_flat_widths(&self, widths: &[f64]) -> Self {
        assert_eq!(widths.len(), self.n_widths());
        let mut out = self.clone();
        let mut it = widths.iter();
        for ax in out.axes.iter_mut() {
            for w in ax.widths.iter_mut() {
                *w = *it.next().unwrap();
            }
        }
        out
    }

    pub fn validate(&self, n_qe: u32) -> Result<()> {
        let big_n = 1usize << n_qe;
        for axis in Axis::ALL {
            let ax = self.axis(axis);
            let name = axis.name();
            if ax.widths.is_empty() {
                return arg(format!("axis {name}: at least one Lorentzian is required"));
            }
            if ax.widths.len() != ax.centers.len() {
                return arg(format!(
                    "axis {name}: {} widths but {} centers",
                    ax.widths.len(),
                    ax.centers.len()
                ));
            }
            for (i, (&w, &c)) in ax.widths.iter().zip(&ax.centers).enumerate() {
                if !(w > 0.0) || !w.is_finite() {
                    return arg(format!("axis {name}: width {i} must be positive, got {w}"));
                }
                if c >= big_n {
                    return arg(format!("axis {name}: center {c} outside [0, {big_n})"));
                }
            }
            for i in 0..ax.len() {
                for j in 0..i {
                    if ax.centers[i] == ax.centers[j] && ax.widths[i] == ax.widths[j] {
                        return arg(format!(
                            "axis {name}: functions {j} and {i} are identical (width {}, center {})",
                            ax.widths[i], ax.centers[i]
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// All Lorentzian states along `axis`, one per function.
    pub fn states(&self, axis: Axis, n_qe: u32) -> Result<Vec<Lorentzian1D>> {
        let ax = self.axis(axis);
        ax.widths
            .iter()
            .zip(&ax.centers)
            .map(|(&w, &c)| Lorentzian1D::new(n_qe, w, c))
            .collect()
    }

    /// Per-axis overlap matrices as a Kronecker-structured product overlap.
    pub fn overlap(&self, n_qe: u32) -> Result<Kron3> {
        Ok(Kron3::new([
            overlap_1d(&self.states(Axis::X, n_qe)?),
            overlap_1d(&self.states(Axis::Y, n_qe)?),
            overlap_1d(&self.states(Axis::Z, n_qe)?),
        ]))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `S_ij = ⟨L_i|L_j⟩` for the functions along one axis.
pub fn overlap_1d(states: &[Lorentzian1D]) -> DMatrix<f64> {
    let n = states.len();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        s[(i, i)] = 1.0;
        for j in 0..i {
            let v = dot(&states[i].values, &states[j].values);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// `D_ij = ⟨∂L_i/∂a_i | L_j⟩`. The derivative of the 1D overlap with respect
/// to `a_i` is `D_ij` in row `i` plus `D_ij` in column `i`; `D_ii = 0`.
pub fn overlap_1d_derivative(states: &[Lorentzian1D]) -> DMatrix<f64> {
    let n = states.len();
    let derivs: Vec<Vec<f64>> = states.iter().map(|s| s.width_derivative()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            dot(&derivs[i], &states[j].values)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent loop over the defining formula, including the `1/√N`
    /// prefactor, normalized by brute-force sum of squares.
    fn naive_profile(n: u32, a: f64) -> Vec<f64> {
        let big_n = 1usize << n;
        let nf = big_n as f64;
        let raw: Vec<f64> = (0..big_n)
            .map(|k| {
                let sign = (-1.0f64).powi(k as i32);
                (1.0 - (-2.0 * a).exp()) * (1.0 - sign * (-a * nf / 2.0).exp())
                    / (1.0 - 2.0 * (-a).exp() * (2.0 * std::f64::consts::PI * k as f64 / nf).cos()
                        + (-2.0 * a).exp())
                    / nf.sqrt()
            })
            .collect();
        let norm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        raw.into_iter().map(|v| v / norm).collect()
    }

    #[test]
    fn single_qubit_profile() {
        for a in [0.05, 0.7, 3.0] {
            let p = lf_profile(1, a).unwrap();
            let (v0, v1) = (p.values[0], p.values[1]);
            assert!(v0 > v1 && v1 > 0.0, "a={a}: {v0} {v1}");
            assert!((v0 * v0 + v1 * v1 - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn narrow_limit_is_a_delta() {
        // small a: the profile collapses onto k = 0
        let p = lf_profile(4, 1e-5).unwrap();
        assert!(p.values[0] >= 1.0 - 1e-8);
        assert!(p.values[1..].iter().all(|&v| v < 1e-4));
    }

    #[test]
    fn matches_naive_formula() {
        let p = lf_profile(3, 0.5).unwrap();
        let q = naive_profile(3, 0.5);
        for (a, b) in p.values.iter().zip(&q) {
            assert!((a - b).abs() < 1e-14);
        }
        // C_S/√N · ℓ_k = L_k
        let (raw, _) = raw_profile(3, 0.5, false);
        assert!((p.norm_const / 8f64.sqrt() * raw[2] - p.values[2]).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_width() {
        assert!(lf_profile(3, 0.0).is_err());
        assert!(lf_profile(3, -1.0).is_err());
        assert!(lf_profile_da(3, 0.0).is_err());
        assert!(lf_profile(3, f64::NAN).is_err());
    }

    #[test]
    fn huge_width_is_flat() {
        // e^{-2a} underflows; the profile tends to the uniform vector
        for a in [20.0, 800.0] {
            let p = lf_profile(5, a).unwrap();
            let flat = 1.0 / 32f64.sqrt();
            assert!(p.values.iter().all(|v| (v - flat).abs() < 1e-8), "a={a}");
        }
    }

    #[test]
    fn profile_properties() {
        for n in 1..=6 {
            let big_n = 1usize << n;
            for a in [0.1, 0.5, 1.0, 2.0, 5.0] {
                let v = lf_profile(n, a).unwrap().values;
                assert!(v.iter().all(|&x| x > 0.0));
                assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
                for k in 1..big_n {
                    assert!((v[k] - v[big_n - k]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn shifted_states() {
        let p = lf_profile(4, 0.8).unwrap().values;
        assert_eq!(lf_state(4, 0.8, 0).unwrap(), p);
        let s = lf_state(4, 0.8, 5).unwrap();
        assert_eq!(shift(&s, 16 - 5), p);
        assert!((dot(&s, &s) - 1.0).abs() < 1e-14);
        assert!(lf_state(4, 0.8, 16).is_err());
    }

    #[test]
    fn derivative_is_orthogonal_to_profile() {
        for a in [0.3, 1.0, 3.0] {
            let v = lf_profile(4, a).unwrap().values;
            let d = lf_profile_da(4, a).unwrap();
            assert!(dot(&v, &d).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-5;
        for a in [0.3, 1.0, 3.0] {
            let d = lf_profile_da(4, a).unwrap();
            let p = lf_profile(4, a + h).unwrap().values;
            let m = lf_profile(4, a - h).unwrap().values;
            let scale = d.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            for k in 0..16 {
                let fd = (p[k] - m[k]) / (2.0 * h);
                assert!(
                    (fd - d[k]).abs() <= 1e-6 * scale,
                    "a={a} k={k}: analytic {} fd {fd}",
                    d[k]
                );
            }
        }
    }

    #[test]
    fn shifted_derivative() {
        let l = Lorentzian1D::new(4, 1.3, 6).unwrap();
        let d0 = lf_profile_da(4, 1.3).unwrap();
        assert_eq!(l.width_derivative(), shift(&d0, 6));
    }

    #[test]
    fn overlap_1d_examples() {
        let one = overlap_1d(&[Lorentzian1D::new(4, 1.0, 3).unwrap()]);
        assert_eq!(one, DMatrix::from_element(1, 1, 1.0));

        let same = [
            Lorentzian1D::new(4, 1.0, 3).unwrap(),
            Lorentzian1D::new(4, 1.0, 3).unwrap(),
        ];
        assert!((overlap_1d(&same)[(0, 1)] - 1.0).abs() < 1e-14);

        let far = [
            Lorentzian1D::new(5, 0.01, 0).unwrap(),
            Lorentzian1D::new(5, 0.01, 16).unwrap(),
        ];
        let brute: f64 = (0..32).map(|k| far[0].values[k] * far[1].values[k]).sum();
        let s = overlap_1d(&far);
        assert!(s[(0, 1)] < 1e-3);
        assert!((s[(0, 1)] - brute).abs() < 1e-15);
    }

    #[test]
    fn overlap_1d_psd_and_summation_order() {
        let states: Vec<_> = [(0.4, 3), (0.9, 7), (2.0, 12), (0.6, 30)]
            .iter()
            .map(|&(a, c)| Lorentzian1D::new(5, a, c).unwrap())
            .collect();
        let s = overlap_1d(&states);
        assert!((&s - s.transpose()).abs().max() < 1e-14);
        let ev = nalgebra::SymmetricEigen::new(s.clone()).eigenvalues;
        assert!(ev.iter().all(|&e| e > -1e-12));
        for i in 0..4 {
            for j in 0..4 {
                let rev: f64 = (0..32)
                    .rev()
                    .map(|k| states[i].values[k] * states[j].values[k])
                    .sum();
                assert!((rev - s[(i, j)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn spec_validation() {
        let good = LorentzianBasisSpec::new([
            AxisFunctions { widths: vec![0.6, 0.6], centers: vec![26, 37] },
            AxisFunctions { widths: vec![0.7], centers: vec![32] },
            AxisFunctions { widths: vec![0.7], centers: vec![32] },
        ]);
        assert!(good.validate(6).is_ok());
        assert_eq!(good.n_prod(), 2);
        assert!(good.validate(5).is_err(), "center 37 outside 32-point grid");

        let mut dup = good.clone();
        dup.axes[0].centers[1] = 26;
        assert!(dup.validate(6).is_err());

        let mut bad = good.clone();
        bad.axes[1].widths[0] = 0.0;
        assert!(bad.validate(6).is_err());

        let mut empty = good.clone();
        empty.axes[2] = AxisFunctions { widths: vec![], centers: vec![] };
        assert!(empty.validate(6).is_err());
    }

    #[test]
    fn boundary_mass_flags_edges() {
        let centered = Lorentzian1D::new(6, 0.1, 32).unwrap();
        assert!(centered.boundary_mass() < BOUNDARY_MASS_LIMIT);
        let edge = Lorentzian1D::new(6, 0.1, 1).unwrap();
        assert!(edge.boundary_mass() > BOUNDARY_MASS_LIMIT);
    }
}
