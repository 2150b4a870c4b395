//! Contracted Cartesian Gaussian orbitals sampled on the simulation grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::tensor::Axis;

/// Largest `n_qe` for which a full `N³` grid is assembled unless overridden.
pub const DEFAULT_MAX_QUBITS: u32 = 8;

/// Tolerance on `∫|χ|² = 1` before an AO is reported as unnormalized.
pub const AO_NORM_TOLERANCE: f64 = 1e-8;

/// `h(ξ; γ, m) = ξ^m e^{−γξ²}` with `0⁰ = 1`.
#[inline]
pub fn gaussian_factor(xi: f64, gamma: f64, m: u32) -> f64 {
    xi.powi(m as i32) * (-gamma * xi * xi).exp()
}

/// `(2m − 1)!!` with `(−1)!! = 1`.
fn double_factorial_odd(m: u32) -> f64 {
    (1..=m).map(|i| (2 * i - 1) as f64).product()
}

/// `∫ x^{2m} e^{−p x²} dx` over the real line.
fn moment(m: u32, p: f64) -> f64 {
    double_factorial_odd(m) / (2.0 * p).powi(m as i32) * (std::f64::consts::PI / p).sqrt()
}

/// One Cartesian Gaussian basis function
/// `χ(r) = Σ_s b_s e^{−γ_s |r−τ|²} (x−τ_x)^{m_x} (y−τ_y)^{m_y} (z−τ_z)^{m_z}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractedGaussianAO {
    pub exponents: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub powers: [u32; 3],
    pub center: [f64; 3],
}

impl ContractedGaussianAO {
    pub fn new(
        exponents: Vec<f64>,
        coefficients: Vec<f64>,
        powers: [u32; 3],
        center: [f64; 3],
    ) -> Result<Self> {
        if exponents.is_empty() {
            return arg("an AO needs at least one primitive");
        }
        if exponents.len() != coefficients.len() {
            return arg(format!(
                "{} exponents but {} contraction coefficients",
                exponents.len(),
                coefficients.len()
            ));
        }
        if let Some(g) = exponents.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
            return arg(format!("Gaussian exponents must be positive, got {g}"));
        }
        if coefficients.iter().chain(&center).any(|v| !v.is_finite()) {
            return arg("non-finite AO coefficient or center");
        }
        Ok(Self {
            exponents,
            coefficients,
            powers,
            center,
        })
    }

    /// Builds an AO from contraction coefficients that multiply unit-norm
    /// primitives (the convention of published basis-set tables), then
    /// rescales the contraction to unit norm.
    pub fn from_normalized_primitives(
        exponents: Vec<f64>,
        coefficients: Vec<f64>,
        powers: [u32; 3],
        center: [f64; 3],
    ) -> Result<Self> {
        let raw: Vec<f64> = exponents
            .iter()
            .zip(&coefficients)
            .map(|(&g, &c)| c * primitive_norm(g, powers))
            .collect();
        Self::new(exponents, raw, powers, center)?.normalized()
    }

    pub fn n_primitives(&self) -> usize {
        self.exponents.len()
    }

    /// `∫|χ|² d³r` evaluated analytically.
    pub fn norm_sq(&self) -> f64 {
        let prims = || self.exponents.iter().zip(&self.coefficients);
        prims()
            .flat_map(|(&gs, &bs)| {
                prims().map(move |(&gt, &bt)| {
                    bs * bt * self.powers.iter().map(|&m| moment(m, gs + gt)).product::<f64>()
                })
            })
            .sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sq();
        if !(n > 0.0) {
            return Err(Error::Degenerate("AO has zero norm".into()));
        }
        let s = 1.0 / n.sqrt();
        Ok(Self {
            coefficients: self.coefficients.iter().map(|c| c * s).collect(),
            ..self.clone()
        })
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sq() - 1.0).abs() <= AO_NORM_TOLERANCE
    }
}

/// Norm of `x^{m_x} y^{m_y} z^{m_z} e^{−γ r²}`, inverted.
pub fn primitive_norm(gamma: f64, powers: [u32; 3]) -> f64 {
    let p = 2.0 * gamma;
    1.0 / powers.iter().map(|&m| moment(m, p)).product::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolecularOrbital {
    pub aos: Vec<ContractedGaussianAO>,
    pub coefficients: Vec<f64>,
}

/// One separable term `w · h_x ⊗ h_y ⊗ h_z` of an orbital, `w = c_μ b_{μs}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveTerm {
    pub ao: usize,
    pub primitive: usize,
    pub weight: f64,
}

impl MolecularOrbital {
    pub fn new(aos: Vec<ContractedGaussianAO>, coefficients: Vec<f64>) -> Result<Self> {
        if aos.is_empty() {
            return arg("an orbital needs at least one AO");
        }
        if aos.len() != coefficients.len() {
            return arg(format!(
                "{} AOs but {} orbital coefficients",
                aos.len(),
                coefficients.len()
            ));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return arg("non-finite orbital coefficient");
        }
        Ok(Self { aos, coefficients })
    }

    pub fn terms(&self) -> Vec<PrimitiveTerm> {
        let mut out = Vec::new();
        for (mu, (ao, &c)) in self.aos.iter().zip(&self.coefficients).enumerate() {
            for (s, &b) in ao.coefficients.iter().enumerate() {
                out.push(PrimitiveTerm {
                    ao: mu,
                    primitive: s,
                    weight: c * b,
                });
            }
        }
        out
    }
}

/// Box-shaped grid: `2^n_qe` points per axis at `origin + k Δx_ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationCell {
    pub origin: [f64; 3],
    pub edge_lengths: [f64; 3],
    pub qubits_per_axis: u32,
}

impl SimulationCell {
    pub fn new(origin: [f64; 3], edge_lengths: [f64; 3], qubits_per_axis: u32) -> Result<Self> {
        if qubits_per_axis == 0 || qubits_per_axis > 20 {
            return arg(format!("qubits per axis must be in 1..=20, got {qubits_per_axis}"));
        }
        if edge_lengths.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return arg(format!("edge lengths must be positive, got {edge_lengths:?}"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return arg("non-finite cell origin");
        }
        Ok(Self {
            origin,
            edge_lengths,
            qubits_per_axis,
        })
    }

    pub fn cube(origin: [f64; 3], edge: f64, qubits_per_axis: u32) -> Result<Self> {
        Self::new(origin, [edge; 3], qubits_per_axis)
    }

    pub fn n_points(&self) -> usize {
        1usize << self.qubits_per_axis
    }

    pub fn spacing(&self, axis: Axis) -> f64 {
        self.edge_lengths[axis.index()] / self.n_points() as f64
    }

    pub fn volume_element(&self) -> f64 {
        Axis::ALL.iter().map(|&a| self.spacing(a)).product()
    }

    pub fn coordinate(&self, axis: Axis, k: usize) -> f64 {
        self.origin[axis.index()] + k as f64 * self.spacing(axis)
    }

    /// Nearest grid index to a Cartesian coordinate, if inside the grid.
    pub fn nearest_index(&self, axis: Axis, x: f64) -> Option<usize> {
        let k = ((x - self.origin[axis.index()]) / self.spacing(axis)).round();
        (k >= 0.0 && k < self.n_points() as f64).then_some(k as usize)
    }
}

/// `h(kΔx − τ̃; γ_s, m)` for every grid index along `axis`.
pub fn sample_ao_1d(
    ao: &ContractedGaussianAO,
    axis: Axis,
    primitive: usize,
    cell: &SimulationCell,
) -> Result<Vec<f64>> {
    let Some(&gamma) = ao.exponents.get(primitive) else {
        return arg(format!(
            "primitive index {primitive} out of range (AO has {})",
            ao.n_primitives()
        ));
    };
    let a = axis.index();
    let shift = ao.center[a] - cell.origin[a];
    let dx = cell.spacing(axis);
    let m = ao.powers[a];
    Ok((0..cell.n_points())
        .map(|k| gaussian_factor(k as f64 * dx - shift, gamma, m))
        .collect())
}

/// Grid samples of every primitive term of an orbital, per axis.
#[derive(Debug, Clone)]
pub struct SampledOrbital {
    pub terms: Vec<PrimitiveTerm>,
    /// `samples[axis][term]` is a length-`N` vector.
    pub samples: [Vec<Vec<f64>>; 3],
}

impl SampledOrbital {
    pub fn new(mo: &MolecularOrbital, cell: &SimulationCell) -> Self {
        let terms = mo.terms();
        let samples = Axis::ALL.map(|axis| {
            terms
                .iter()
                .map(|t| sample_ao_1d(&mo.aos[t.ao], axis, t.primitive, cell).unwrap())
                .collect()
        });
        Self { terms, samples }
    }

    /// `Σ_k φ(r_k)²` over the whole grid, evaluated term pair by term pair
    /// without building the grid.
    pub fn grid_sum_sq(&self) -> f64 {
        let n = self.terms.len();
        let dots: [Vec<f64>; 3] = std::array::from_fn(|a| {
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = crate::lorentzian::dot(&self.samples[a][i], &self.samples[a][j]);
                    g[i * n + j] = v;
                    g[j * n + i] = v;
                }
            }
            g
        });
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let o = i * n + j;
                total += self.terms[i].weight
                    * self.terms[j].weight
                    * dots[0][o]
                    * dots[1][o]
                    * dots[2][o];
            }
        }
        total
    }
}

/// `𝒩 = (ΔV Σ_k |φ(r_k)|²)^{−1/2}`, computed separably.
pub fn grid_norm_factor(mo: &MolecularOrbital, cell: &SimulationCell) -> Result<f64> {
    let sum = SampledOrbital::new(mo, cell).grid_sum_sq();
    if !(sum > 0.0) {
        return Err(Error::Degenerate("orbital vanishes on the grid".into()));
    }
    Ok(1.0 / (cell.volume_element() * sum).sqrt())
}

/// Real amplitudes over the `N³` grid, `k_z` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub qubits_per_axis: u32,
    pub amplitudes: Vec<f64>,
}

impl GridState {
    pub fn n_points(&self) -> usize {
        1usize << self.qubits_per_axis
    }

    pub fn index(&self, kx: usize, ky: usize, kz: usize) -> usize {
        let n = self.n_points();
        (kx * n + ky) * n + kz
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    pub fn dot(&self, other: &GridState) -> f64 {
        assert_eq!(self.amplitudes.len(), other.amplitudes.len());
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub fn check_grid_budget(what: &'static str, n_qe: u32, max_qubits: u32) -> Result<()> {
    if n_qe > max_qubits {
        return Err(Error::Resource {
            what,
            requested: n_qe,
            limit: max_qubits,
        });
    }
    Ok(())
}

/// Sums `Σ_t w_t · x_t ⊗ y_t ⊗ z_t` onto the full grid, one `k_x` slab per
/// task.
pub(crate) fn assemble_separable(
    n: usize,
    weights: &[f64],
    factors: [&[Vec<f64>]; 3],
) -> Vec<f64> {
    let mut out = vec![0.0; n * n * n];
    out.par_chunks_mut(n * n).enumerate().for_each(|(kx, slab)| {
        for (t, &w) in weights.iter().enumerate() {
            let wx = w * factors[0][t][kx];
            if wx == 0.0 {
                continue;
            }
            let (fy, fz) = (&factors[1][t], &factors[2][t]);
            for (ky, row) in slab.chunks_mut(n).enumerate() {
                let wxy = wx * fy[ky];
                for (r, &z) in row.iter_mut().zip(fz) {
                    *r += wxy * z;
                }
            }
        }
    });
    out
}

/// The normalized grid image of `mo` and its normalization factor `𝒩`.
pub fn build_ideal_state(
    mo: &MolecularOrbital,
    cell: &SimulationCell,
    max_qubits: u32,
) -> Result<(GridState, f64)> {
    check_grid_budget("ideal state", cell.qubits_per_axis, max_qubits)?;
    let sampled = SampledOrbital::new(mo, cell);
    let weights: Vec<f64> = sampled.terms.iter().map(|t| t.weight).collect();
    let mut phi = assemble_separable(
        cell.n_points(),
        &weights,
        [&sampled.samples[0], &sampled.samples[1], &sampled.samples[2]],
    );
    let sum: f64 = phi.iter().map(|v| v * v).sum();
    if !(sum > 0.0) {
        return Err(Error::Degenerate("orbital vanishes on the grid".into()));
    }
    let dv = cell.volume_element();
    let norm_factor = 1.0 / (dv * sum).sqrt();
    let scale = norm_factor * dv.sqrt();
    phi.iter_mut().for_each(|v| *v *= scale);
    Ok((
        GridState {
            qubits_per_axis: cell.qubits_per_axis,
            amplitudes: phi,
        },
        norm_factor,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s_gaussian(gamma: f64, center: [f64; 3]) -> ContractedGaussianAO {
        ContractedGaussianAO::new(vec![gamma], vec![1.0], [0, 0, 0], center)
            .unwrap()
            .normalized()
            .unwrap()
    }

    #[test]
    fn gaussian_factor_examples() {
        assert_eq!(gaussian_factor(0.0, 1.0, 0), 1.0);
        assert_eq!(gaussian_factor(0.0, 3.7, 1), 0.0);
        assert!((gaussian_factor(1.0, 0.5, 2) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((gaussian_factor(1.0, 0.5, 2) - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn sample_ao_1d_convention() {
        let cell = SimulationCell::cube([0.0; 3], 4.0, 2).unwrap();
        let ao = ContractedGaussianAO::new(vec![1.0], vec![1.0], [0, 1, 2], [0.0; 3]).unwrap();
        let x = sample_ao_1d(&ao, Axis::X, 0, &cell).unwrap();
        assert_eq!(x[0], 1.0);
        assert!((x[1] - (-1.0f64).exp()).abs() < 1e-15);
        let y = sample_ao_1d(&ao, Axis::Y, 0, &cell).unwrap();
        assert_eq!(y[0], 0.0);
        assert!(sample_ao_1d(&ao, Axis::Z, 1, &cell).is_err());
    }

    #[test]
    fn analytic_norm_matches_quadrature() {
        let ao = ContractedGaussianAO::new(
            vec![1.3, 0.4],
            vec![0.7, -0.2],
            [1, 0, 2],
            [0.0; 3],
        )
        .unwrap();
        // fine grid quadrature of the separable integrand
        let h = 0.01;
        let pts: Vec<f64> = (-1200..=1200).map(|i| i as f64 * h).collect();
        let mut total = 0.0;
        for (&gs, &bs) in ao.exponents.iter().zip(&ao.coefficients) {
            for (&gt, &bt) in ao.exponents.iter().zip(&ao.coefficients) {
                let axis_int = |m: u32| -> f64 {
                    pts.iter()
                        .map(|&x| gaussian_factor(x, gs, m) * gaussian_factor(x, gt, m))
                        .sum::<f64>()
                        * h
                };
                total += bs * bt * axis_int(1) * axis_int(0) * axis_int(2);
            }
        }
        assert!((ao.norm_sq() - total).abs() < 1e-10 * total);
        assert!(ao.normalized().unwrap().is_normalized());
    }

    #[test]
    fn normalized_primitive_convention() {
        // STO-3G-like hydrogen 1s: coefficients refer to unit-norm primitives
        let ao = ContractedGaussianAO::from_normalized_primitives(
            vec![3.42525091, 0.62391373, 0.16885540],
            vec![0.15432897, 0.53532814, 0.44463454],
            [0, 0, 0],
            [0.0; 3],
        )
        .unwrap();
        assert!(ao.is_normalized());
        let single = ContractedGaussianAO::new(vec![0.8], vec![primitive_norm(0.8, [2, 1, 0])], [2, 1, 0], [0.0; 3]).unwrap();
        assert!((single.norm_sq() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn ideal_state_of_centered_gaussian() {
        let cell = SimulationCell::cube([-6.0; 3], 12.0, 5).unwrap();
        let mo = MolecularOrbital::new(vec![s_gaussian(0.8, [0.0; 3])], vec![1.0]).unwrap();
        let (state, nf) = build_ideal_state(&mo, &cell, DEFAULT_MAX_QUBITS).unwrap();
        assert!((state.norm_sq() - 1.0).abs() < 1e-12);
        assert!((0.999..=1.001).contains(&nf), "𝒩 = {nf}");
        assert!((grid_norm_factor(&mo, &cell).unwrap() - nf).abs() < 1e-12);
    }

    #[test]
    fn ideal_state_absorbs_scale() {
        let cell = SimulationCell::cube([-4.0; 3], 8.0, 4).unwrap();
        let aos = vec![s_gaussian(0.5, [-0.7, 0.0, 0.0]), s_gaussian(0.5, [0.7, 0.1, 0.0])];
        let a = MolecularOrbital::new(aos.clone(), vec![0.6, 0.4]).unwrap();
        let b = MolecularOrbital::new(aos, vec![1.2, 0.8]).unwrap();
        let (sa, _) = build_ideal_state(&a, &cell, 8).unwrap();
        let (sb, _) = build_ideal_state(&b, &cell, 8).unwrap();
        for (x, y) in sa.amplitudes.iter().zip(&sb.amplitudes) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn ideal_state_guards() {
        let cell = SimulationCell::cube([-4.0; 3], 8.0, 9).unwrap();
        let mo = MolecularOrbital::new(vec![s_gaussian(0.5, [0.0; 3])], vec![1.0]).unwrap();
        assert!(matches!(
            build_ideal_state(&mo, &cell, DEFAULT_MAX_QUBITS),
            Err(Error::Resource { requested: 9, limit: 8, .. })
        ));
        let zero = MolecularOrbital::new(vec![s_gaussian(0.5, [0.0; 3])], vec![0.0]).unwrap();
        let small = SimulationCell::cube([-4.0; 3], 8.0, 3).unwrap();
        assert!(matches!(
            build_ideal_state(&zero, &small, 8),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn separability_matches_direct_evaluation() {
        let cell = SimulationCell::new([-3.0, -2.5, -3.5], [6.0, 5.0, 7.0], 3).unwrap();
        let p = ContractedGaussianAO::new(vec![0.9, 0.3], vec![0.5, 0.4], [1, 0, 1], [0.2, -0.1, 0.3])
            .unwrap();
        let s = s_gaussian(0.6, [-0.5, 0.4, 0.0]);
        let mo = MolecularOrbital::new(vec![p, s], vec![0.8, -0.3]).unwrap();
        let (state, nf) = build_ideal_state(&mo, &cell, 8).unwrap();
        let scale = nf * cell.volume_element().sqrt();
        let n = cell.n_points();
        for kx in 0..n {
            for ky in 0..n {
                for kz in 0..n {
                    let r = [
                        cell.coordinate(Axis::X, kx),
                        cell.coordinate(Axis::Y, ky),
                        cell.coordinate(Axis::Z, kz),
                    ];
                    let mut phi = 0.0;
                    for (ao, &c) in mo.aos.iter().zip(&mo.coefficients) {
                        let d: Vec<f64> = (0..3).map(|i| r[i] - ao.center[i]).collect();
                        let r2: f64 = d.iter().map(|v| v * v).sum();
                        let cart: f64 = (0..3).map(|i| d[i].powi(ao.powers[i] as i32)).product();
                        for (&g, &b) in ao.exponents.iter().zip(&ao.coefficients) {
                            phi += c * b * cart * (-g * r2).exp();
                        }
                    }
                    let got = state.amplitudes[state.index(kx, ky, kz)];
                    assert!((got - scale * phi).abs() < 1e-12);
                }
            }
        }
    }
}
