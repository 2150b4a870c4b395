//! Fidelity maximization of a Tucker-form Lorentzian expansion.
//!
//! For fixed widths and centers the optimal core tensor follows from the
//! generalized eigenproblem `G d = κ S d` with the rank-one `G = t tᵀ`; the
//! widths are then optimized on the reduced fidelity `F(a) = κ_max − P`.

mod optimize;

pub use optimize::{
    optimize_widths, optimize_with_restarts, FitDiagnostics, FitFlag, OptimizeOptions,
    RestartSummary, TuckerState,
};

use std::hash::{DefaultHasher, Hash, Hasher};

use nalgebra::DMatrix;

use crate::basis::{
    assemble_separable, check_grid_budget, sample_ao_1d, ContractedGaussianAO, GridState,
    MolecularOrbital, SampledOrbital, SimulationCell,
};
use crate::error::{arg, Error, Result};
use crate::lorentzian::{
    dot, overlap_1d, overlap_1d_derivative, Lorentzian1D, LorentzianBasisSpec,
};
use crate::tensor::{Axis, Kron3, Tensor3};

/// Relative eigenvalue cutoff used when orthogonalizing the overlap matrix.
pub const OVERLAP_EIGEN_CUTOFF: f64 = 1e-10;

/// `M_{νμs}(a, k_c) = (L_ν/√N) Σ_k h(kΔx − τ̃; γ, m) L_{k−k_c}(a)`.
pub fn m_integral(
    ao: &ContractedGaussianAO,
    axis: Axis,
    primitive: usize,
    width: f64,
    center: usize,
    cell: &SimulationCell,
) -> Result<f64> {
    let h = sample_ao_1d(ao, axis, primitive, cell)?;
    let lf = Lorentzian1D::new(cell.qubits_per_axis, width, center)?;
    Ok(m_prefactor(cell, axis) * dot(&h, &lf.values))
}

fn m_prefactor(cell: &SimulationCell, axis: Axis) -> f64 {
    cell.edge_lengths[axis.index()] / (cell.n_points() as f64).sqrt()
}

/// Places `count` centers evenly inside `[box_min, box_min + box_edge]`
/// (midpoints of equal sub-intervals), snapped to the nearest grid index.
pub fn centers_from_box(
    cell: &SimulationCell,
    axis: Axis,
    box_min: f64,
    box_edge: f64,
    count: usize,
) -> Result<Vec<usize>> {
    if count == 0 {
        return arg("box generator needs at least one center");
    }
    if !(box_edge >= 0.0) {
        return arg(format!("box edge must be non-negative, got {box_edge}"));
    }
    let mut out: Vec<usize> = Vec::with_capacity(count);
    for i in 0..count {
        let x = box_min + (i as f64 + 0.5) * box_edge / count as f64;
        let Some(k) = cell.nearest_index(axis, x) else {
            return arg(format!(
                "axis {}: box center {x} lies outside the simulation cell",
                axis.name()
            ));
        };
        if out.contains(&k) {
            return arg(format!(
                "axis {}: box centers collide on grid index {k}; use fewer centers or a larger box",
                axis.name()
            ));
        }
        out.push(k);
    }
    Ok(out)
}

/// An orbital, a grid and a Lorentzian basis to fit it with.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub label: String,
    pub mo: MolecularOrbital,
    pub cell: SimulationCell,
    pub spec: LorentzianBasisSpec,
    pub penalty_strength: f64,
    pub norm_factor: f64,
    sampled: SampledOrbital,
}

impl FitProblem {
    pub fn new(
        mo: MolecularOrbital,
        cell: SimulationCell,
        spec: LorentzianBasisSpec,
        penalty_strength: f64,
    ) -> Result<Self> {
        if !(penalty_strength >= 0.0) || !penalty_strength.is_finite() {
            return arg(format!("penalty strength must be ≥ 0, got {penalty_strength}"));
        }
        spec.validate(cell.qubits_per_axis)?;
        let sampled = SampledOrbital::new(&mo, &cell);
        let sum = sampled.grid_sum_sq();
        if !(sum > 0.0) {
            return Err(Error::Degenerate("orbital vanishes on the grid".into()));
        }
        let norm_factor = 1.0 / (cell.volume_element() * sum).sqrt();
        Ok(Self {
            label: String::new(),
            mo,
            cell,
            spec,
            penalty_strength,
            norm_factor,
            sampled,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn n_qe(&self) -> u32 {
        self.cell.qubits_per_axis
    }

    /// `𝒩 / √(L_x L_y L_z)`.
    fn t_prefactor(&self) -> f64 {
        self.norm_factor / self.cell.edge_lengths.iter().product::<f64>().sqrt()
    }

    /// Everything that depends on the widths, for a spec with this
    /// problem's centers.
    pub fn evaluate(&self, spec: &LorentzianBasisSpec) -> Result<Evaluation> {
        Evaluation::new(self, spec, false)
    }

    pub(crate) fn evaluate_with_derivatives(&self, spec: &LorentzianBasisSpec) -> Result<Evaluation> {
        Evaluation::new(self, spec, true)
    }
}

/// Identifies the inputs a [`TTensor`] was computed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub mo_id: String,
    pub cell_id: u64,
    pub spec_hash: u64,
}

fn hash_f64s<'a>(h: &mut DefaultHasher, v: impl IntoIterator<Item = &'a f64>) {
    for x in v {
        x.to_bits().hash(h);
    }
}

fn cell_hash(cell: &SimulationCell) -> u64 {
    let mut h = DefaultHasher::new();
    hash_f64s(&mut h, cell.origin.iter().chain(&cell.edge_lengths));
    cell.qubits_per_axis.hash(&mut h);
    h.finish()
}

pub fn spec_hash(spec: &LorentzianBasisSpec) -> u64 {
    let mut h = DefaultHasher::new();
    for ax in &spec.axes {
        hash_f64s(&mut h, &ax.widths);
        ax.centers.hash(&mut h);
    }
    h.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TTensor {
    pub values: Tensor3,
    pub provenance: Provenance,
}

/// Per-axis table of `M` integrals (and their width derivatives).
#[derive(Debug, Clone)]
struct MTable {
    /// `values[term][ℓ]`
    values: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

fn m_table(
    sampled: &SampledOrbital,
    axis: Axis,
    states: &[Lorentzian1D],
    prefactor: f64,
    with_derivatives: bool,
) -> MTable {
    let samples = &sampled.samples[axis.index()];
    let values = samples
        .iter()
        .map(|h| states.iter().map(|l| prefactor * dot(h, &l.values)).collect())
        .collect();
    let derivs = if with_derivatives {
        let dl: Vec<Vec<f64>> = states.iter().map(|l| l.width_derivative()).collect();
        samples
            .iter()
            .map(|h| dl.iter().map(|d| prefactor * dot(h, d)).collect())
            .collect()
    } else {
        Vec::new()
    };
    MTable { values, derivs }
}

/// Widths-dependent quantities of a fit problem at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub spec: LorentzianBasisSpec,
    pub t: Tensor3,
    pub overlap: Kron3,
    pub solution: CoreSolution,
    states: [Vec<Lorentzian1D>; 3],
    tables: [MTable; 3],
}

impl Evaluation {
    fn new(problem: &FitProblem, spec: &LorentzianBasisSpec, with_derivatives: bool) -> Result<Self> {
        let n_qe = problem.n_qe();
        let states = [
            spec.states(Axis::X, n_qe)?,
            spec.states(Axis::Y, n_qe)?,
            spec.states(Axis::Z, n_qe)?,
        ];
        let tables = Axis::ALL.map(|axis| {
            m_table(
                &problem.sampled,
                axis,
                &states[axis.index()],
                m_prefactor(&problem.cell, axis),
                with_derivatives,
            )
        });
        let mut t = Tensor3::zeros(spec.counts());
        let pre = problem.t_prefactor();
        for (i, term) in problem.sampled.terms.iter().enumerate() {
            t.add_outer(
                pre * term.weight,
                &tables[0].values[i],
                &tables[1].values[i],
                &tables[2].values[i],
            );
        }
        let overlap = Kron3::new([
            overlap_1d(&states[0]),
            overlap_1d(&states[1]),
            overlap_1d(&states[2]),
        ]);
        let solution = solve_core(&t, &overlap, problem.penalty_strength)?;
        Ok(Self {
            spec: spec.clone(),
            t,
            overlap,
            solution,
            states,
            tables,
        })
    }

    pub fn fidelity(&self) -> f64 {
        self.solution.fidelity
    }

    /// `∂F/∂a_{νℓ}` flattened x, then y, then z.
    pub fn gradient(&self, problem: &FitProblem) -> Vec<f64> {
        assert!(
            !self.tables[0].derivs.is_empty(),
            "evaluation was built without derivative tables"
        );
        let sol = &self.solution;
        let d = &sol.core;
        let pre = problem.t_prefactor();
        let counts = self.spec.counts();
        let n_prod = self.spec.n_prod() as f64;
        let alpha = problem.penalty_strength;
        let frob: [f64; 3] = std::array::from_fn(|a| self.overlap.factors[a].norm_squared());

        let mut grad = Vec::with_capacity(self.spec.n_widths());
        for axis in Axis::ALL {
            let a = axis.index();
            let (o1, o2) = match axis {
                Axis::X => (1, 2),
                Axis::Y => (0, 2),
                Axis::Z => (0, 1),
            };
            // g_{νℓ} = Σ_{ℓ'} ∂T_{ℓ'}/∂a_{νℓ} d_{ℓ'}
            let mut g = vec![0.0; counts[a]];
            for (i, term) in problem.sampled.terms.iter().enumerate() {
                let free = contract_two(
                    d,
                    axis,
                    &self.tables[o1].values[i],
                    &self.tables[o2].values[i],
                );
                for (l, gl) in g.iter_mut().enumerate() {
                    *gl += pre * term.weight * self.tables[a].derivs[i][l] * free[l];
                }
            }
            // dᵀ (∂S/∂a_{νℓ}) d = 2 Σ_j D_{ℓj} W_{ℓj}
            let mut others = d.clone();
            for o in [o1, o2] {
                others = others.mode_product(Axis::ALL[o], &self.overlap.factors[o]);
            }
            let w = d.mode_gram(&others, axis);
            let dmat = overlap_1d_derivative(&self.states[a]);
            let s1 = &self.overlap.factors[a];
            for l in 0..counts[a] {
                let mut ds = 0.0;
                let mut tr = 0.0;
                for j in 0..counts[a] {
                    ds += dmat[(l, j)] * w[(l, j)];
                    tr += dmat[(l, j)] * s1[(l, j)];
                }
                let dsd = 2.0 * ds;
                // Tr((S − I) ∂S) = Tr(S_ν ∂S_ν) · Π_{others} ‖S_o‖_F²
                let dp = 2.0 * alpha / n_prod * (2.0 * tr) * frob[o1] * frob[o2];
                grad.push(2.0 * sol.overlap * g[l] - sol.kappa_max * dsd - dp);
            }
        }
        grad
    }
}

/// `v[i] = Σ d[..i..] u[·] w[·]` contracting the two axes other than `free`
/// with `u` (lower axis) and `w` (higher axis).
fn contract_two(d: &Tensor3, free: Axis, u: &[f64], w: &[f64]) -> Vec<f64> {
    let [n0, n1, n2] = d.dims();
    let mut out = vec![0.0; d.dims()[free.index()]];
    for i in 0..n0 {
        for j in 0..n1 {
            for k in 0..n2 {
                let v = d.get(i, j, k);
                match free {
                    Axis::X => out[i] += v * u[j] * w[k],
                    Axis::Y => out[j] += v * u[i] * w[k],
                    Axis::Z => out[k] += v * u[i] * w[j],
                }
            }
        }
    }
    out
}

/// `T_ℓ = ⟨ideal | L_ℓx L_ℓy L_ℓz⟩` for the problem's current widths.
pub fn t_tensor(problem: &FitProblem) -> Result<TTensor> {
    let eval = problem.evaluate(&problem.spec)?;
    Ok(TTensor {
        values: eval.t,
        provenance: Provenance {
            mo_id: problem.label.clone(),
            cell_id: cell_hash(&problem.cell),
            spec_hash: spec_hash(&problem.spec),
        },
    })
}

/// Dense `S_{ℓℓ'} = Π_ν S^{(ν)}_{ℓ_ν ℓ'_ν}` in the z-fastest index order.
pub fn overlap_3d(spec: &LorentzianBasisSpec, n_qe: u32) -> Result<DMatrix<f64>> {
    Ok(spec.overlap(n_qe)?.to_dense())
}

/// `(α/n_prod) Tr((S − I)²)` for a Kronecker-structured overlap.
pub fn penalty_from_overlap(s: &Kron3, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    let dims = s.dims();
    let n_prod: usize = dims.iter().product();
    // off-diagonal mass of each factor; diagonals are exactly one
    let off: [f64; 3] = std::array::from_fn(|a| s.factors[a].norm_squared() - dims[a] as f64);
    let full: [f64; 3] = std::array::from_fn(|a| dims[a] as f64 + off[a]);
    let excess = off[0] * full[1] * full[2]
        + dims[0] as f64 * off[1] * full[2]
        + dims[0] as f64 * dims[1] as f64 * off[2];
    alpha / n_prod as f64 * excess
}

pub fn penalty(spec: &LorentzianBasisSpec, n_qe: u32, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return arg(format!("penalty strength must be ≥ 0, got {alpha}"));
    }
    spec.validate(n_qe)?;
    Ok(penalty_from_overlap(&spec.overlap(n_qe)?, alpha))
}

/// Optimal core tensor for fixed widths and centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreSolution {
    pub core: Tensor3,
    pub kappa_max: f64,
    pub fidelity: f64,
    pub penalty: f64,
    /// `f = Σ_ℓ T_ℓ d_ℓ ≥ 0`.
    pub overlap: f64,
    /// Overlap eigendirections dropped by the conditioning cutoff.
    pub discarded: usize,
    /// `T` has no component in the retained subspace.
    pub degenerate: bool,
}

impl CoreSolution {
    pub fn squared_overlap(&self) -> f64 {
        self.overlap * self.overlap
    }
}

/// Largest eigenpair of `t tᵀ d = κ S d`, normalized to `dᵀ S d = 1`.
///
/// The overlap is orthogonalized in its Kronecker eigenbasis; directions
/// with eigenvalue below [`OVERLAP_EIGEN_CUTOFF`] times the largest are
/// discarded. Within the retained subspace the top eigenvector is
/// `d ∝ S⁺ t` with `κ_max = tᵀ S⁺ t`.
pub fn solve_core(t: &Tensor3, s: &Kron3, alpha: f64) -> Result<CoreSolution> {
    if t.dims() != s.dims() {
        return arg(format!(
            "T tensor dims {:?} do not match overlap dims {:?}",
            t.dims(),
            s.dims()
        ));
    }
    if t.as_slice().iter().any(|v| !v.is_finite()) {
        return arg("T tensor has non-finite entries");
    }
    let dim = s.dim();
    let eig = s.eigen();
    let lambda = eig.product_values();
    let lmax = lambda.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lmax > 0.0) || !lmax.is_finite() {
        return Err(Error::Conditioning { discarded: dim, dim });
    }
    let cutoff = OVERLAP_EIGEN_CUTOFF * lmax;
    let keep: Vec<bool> = lambda.as_slice().iter().map(|&l| l > cutoff).collect();
    let discarded = keep.iter().filter(|k| !**k).count();

    let c = eig.to_eigenbasis(t);
    let mut y = Tensor3::zeros(t.dims());
    let mut kappa = 0.0;
    for (i, &kept) in keep.iter().enumerate() {
        if kept {
            let ci = c.as_slice()[i];
            let li = lambda.as_slice()[i];
            y.as_mut_slice()[i] = ci / li;
            kappa += ci * ci / li;
        }
    }

    let degenerate = !(kappa > 0.0);
    let core = if degenerate {
        // Every retained direction gives κ = 0; take the S-normalized
        // eigendirection whose leading entry is largest in magnitude.
        let mut best: Option<Tensor3> = None;
        for (i, &kept) in keep.iter().enumerate() {
            if !kept {
                continue;
            }
            let mut e = Tensor3::zeros(t.dims());
            e.as_mut_slice()[i] = 1.0 / lambda.as_slice()[i].sqrt();
            let mut v = eig.from_eigenbasis(&e);
            if v.as_slice()[0] < 0.0 {
                v.scale(-1.0);
            }
            let better = match &best {
                None => true,
                Some(b) => v.as_slice()[0].abs() > b.as_slice()[0].abs(),
            };
            if better {
                best = Some(v);
            }
        }
        best.expect("at least the largest eigendirection is retained")
    } else {
        let mut d = eig.from_eigenbasis(&y);
        d.scale(1.0 / kappa.sqrt());
        d
    };
    let overlap = t.dot(&core);
    let kappa_max = if degenerate { 0.0 } else { kappa };
    let penalty = penalty_from_overlap(s, alpha);
    Ok(CoreSolution {
        core,
        kappa_max,
        fidelity: kappa_max - penalty,
        penalty,
        overlap,
        discarded,
        degenerate,
    })
}

/// Analytic `∂F/∂a` at the problem's current widths.
pub fn fidelity_gradient(problem: &FitProblem) -> Result<Vec<f64>> {
    Ok(problem
        .evaluate_with_derivatives(&problem.spec)?
        .gradient(problem))
}

/// `Σ_ℓ d_ℓ |L_ℓx⟩|L_ℓy⟩|L_ℓz⟩` on the full grid.
pub fn tucker_statevector(
    spec: &LorentzianBasisSpec,
    core: &Tensor3,
    cell: &SimulationCell,
    max_qubits: u32,
) -> Result<GridState> {
    let n_qe = cell.qubits_per_axis;
    check_grid_budget("Tucker state", n_qe, max_qubits)?;
    let states: [Vec<Vec<f64>>; 3] = [
        spec.states(Axis::X, n_qe)?.into_iter().map(|l| l.values).collect(),
        spec.states(Axis::Y, n_qe)?.into_iter().map(|l| l.values).collect(),
        spec.states(Axis::Z, n_qe)?.into_iter().map(|l| l.values).collect(),
    ];
    let [nx, ny, nz] = core.dims();
    let mut weights = Vec::with_capacity(core.len());
    let mut fx = Vec::with_capacity(core.len());
    let mut fy = Vec::with_capacity(core.len());
    let mut fz = Vec::with_capacity(core.len());
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                weights.push(core.get(i, j, k));
                fx.push(states[0][i].clone());
                fy.push(states[1][j].clone());
                fz.push(states[2][k].clone());
            }
        }
    }
    Ok(GridState {
        qubits_per_axis: n_qe,
        amplitudes: assemble_separable(cell.n_points(), &weights, [&fx, &fy, &fz]),
    })
}
