//! Canonical (CP) decomposition of a Tucker core tensor.
//!
//! Factor matrices follow the row convention: row `r` of the axis-`ν`
//! matrix holds the LF coefficients of component `r` along that axis.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{assemble_separable, check_grid_budget, GridState, SimulationCell};
use crate::error::{arg, Error, Result};
use crate::fitting::TuckerState;
use crate::lorentzian::LorentzianBasisSpec;
use crate::tensor::{Axis, Kron3, Tensor3};

/// Metric norms below this mark a component as vanishing.
pub const VANISHING_NORM: f64 = 1e-14;

/// Deviations below this are at the resolution of double precision and
/// are reported as zero.
pub const DEVIATION_FLOOR: f64 = f64::EPSILON * f64::EPSILON;

/// Relative ridge added to a rank-deficient normal-equation matrix.
pub const RIDGE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CpOptions {
    pub max_sweeps: usize,
    /// Stop once the relative change of the squared residual falls below this.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Run restarts on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for CpOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 500,
            tol: 1e-12,
            restarts: 8,
            seed: 0,
            parallel: true,
        }
    }
}

/// Raw ALS output.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    /// `R × n_ν` per axis.
    pub factors: [DMatrix<f64>; 3],
    /// `‖d − Σ_r v_r^x ⊗ v_r^y ⊗ v_r^z‖²`.
    pub residual: f64,
    pub sweeps: usize,
    /// A ridge was added to at least one normal-equation solve.
    pub regularized: bool,
    /// Squared residual after every sweep.
    pub history: Vec<f64>,
}

impl CpFactors {
    pub fn rank(&self) -> usize {
        self.factors[0].nrows()
    }
}

/// `Σ_r w_r · f0_r ⊗ f1_r ⊗ f2_r` (rows are components).
pub fn reconstruct(factors: &[DMatrix<f64>; 3], weights: Option<&[f64]>) -> Tensor3 {
    let dims = [factors[0].ncols(), factors[1].ncols(), factors[2].ncols()];
    let mut t = Tensor3::zeros(dims);
    for r in 0..factors[0].nrows() {
        let row = |a: usize| -> Vec<f64> { factors[a].row(r).iter().copied().collect() };
        t.add_outer(weights.map_or(1.0, |w| w[r]), &row(0), &row(1), &row(2));
    }
    t
}

/// `Σ_{jk} d[i,j,k] B[j,r] C[k,r]` for the given mode, with column factors.
fn mttkrp(d: &Tensor3, cols: &[DMatrix<f64>; 3], mode: usize) -> DMatrix<f64> {
    let rank = cols[0].ncols();
    let [n0, n1, n2] = d.dims();
    let mut out = DMatrix::zeros(d.dims()[mode], rank);
    for i in 0..n0 {
        for j in 0..n1 {
            for k in 0..n2 {
                let v = d.get(i, j, k);
                if v == 0.0 {
                    continue;
                }
                let idx = [i, j, k];
                for r in 0..rank {
                    let mut p = v;
                    for (a, &ia) in idx.iter().enumerate() {
                        if a != mode {
                            p *= cols[a][(ia, r)];
                        }
                    }
                    out[(idx[mode], r)] += p;
                }
            }
        }
    }
    out
}

/// Solves `X H = M` for symmetric PSD `H`; adds a relative ridge when `H` is
/// numerically rank-deficient.
fn solve_normal(m: &DMatrix<f64>, h: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = h.nrows();
    let scale = h.trace().max(f64::MIN_POSITIVE);
    let well_conditioned = |l: &DMatrix<f64>| {
        let d = l.diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        lo > 0.0 && (lo / hi).powi(2) > RIDGE
    };
    if let Some(c) = h.clone().cholesky() {
        if well_conditioned(&c.l()) {
            return (c.solve(&m.transpose()).transpose(), false);
        }
    }
    let ridged = h + DMatrix::identity(n, n) * (RIDGE * scale);
    let c = ridged
        .cholesky()
        .expect("a ridged Gram matrix is positive definite");
    (c.solve(&m.transpose()).transpose(), true)
}

fn residual_sq(d: &Tensor3, cols: &[DMatrix<f64>; 3]) -> f64 {
    let rows = [cols[0].transpose(), cols[1].transpose(), cols[2].transpose()];
    let rec = reconstruct(&rows, None);
    d.as_slice()
        .iter()
        .zip(rec.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Alternating least squares from the given starting columns (`n_ν × R`).
fn als(d: &Tensor3, mut cols: [DMatrix<f64>; 3], opts: &CpOptions) -> CpFactors {
    let mut regularized = false;
    let mut prev = residual_sq(d, &cols);
    let norm = d.norm_sq().max(f64::MIN_POSITIVE);
    let mut history = Vec::new();
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        for mode in 0..3 {
            let (o1, o2) = match mode {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let h = (cols[o1].transpose() * &cols[o1]).component_mul(&(cols[o2].transpose() * &cols[o2]));
            let m = mttkrp(d, &cols, mode);
            let (x, ridged) = solve_normal(&m, &h);
            regularized |= ridged;
            cols[mode] = x;
        }
        let cur = residual_sq(d, &cols);
        history.push(cur);
        let change = (prev - cur).abs() / norm;
        prev = cur;
        if change < opts.tol || cur / norm < 1e-30 {
            break;
        }
    }
    CpFactors {
        factors: [cols[0].transpose(), cols[1].transpose(), cols[2].transpose()],
        residual: prev,
        sweeps,
        regularized,
        history,
    }
}

fn random_columns(dims: [usize; 3], rank: usize, seed: u64) -> [DMatrix<f64>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dims.map(|n| DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0)))
}

fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed.wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn check_rank(d: &Tensor3, rank: usize) -> Result<()> {
    if rank == 0 || rank > d.len() {
        return arg(format!("CP rank must lie in [1, {}], got {rank}", d.len()));
    }
    if d.as_slice().iter().any(|v| !v.is_finite()) {
        return arg("core tensor has non-finite entries");
    }
    Ok(())
}

fn pick_best(runs: Vec<CpFactors>) -> CpFactors {
    // first of the minima, so the outcome is independent of scheduling
    runs.into_iter()
        .reduce(|best, r| if r.residual < best.residual { r } else { best })
        .expect("at least one run")
}

/// Best of `opts.restarts` seeded ALS runs.
pub fn cp_decompose(d: &Tensor3, rank: usize, opts: &CpOptions) -> Result<CpFactors> {
    cp_decompose_warm(d, rank, opts, None)
}

/// Like [`cp_decompose`], with an optional extra run started from `warm`
/// (`R × n_ν` rows per axis).
pub fn cp_decompose_warm(
    d: &Tensor3,
    rank: usize,
    opts: &CpOptions,
    warm: Option<&[DMatrix<f64>; 3]>,
) -> Result<CpFactors> {
    check_rank(d, rank)?;
    if opts.restarts == 0 && warm.is_none() {
        return arg("CP needs at least one restart");
    }
    let mut starts: Vec<[DMatrix<f64>; 3]> = Vec::new();
    if let Some(w) = warm {
        if w.iter().any(|f| f.nrows() != rank) || (0..3).any(|a| w[a].ncols() != d.dims()[a]) {
            return arg("warm-start factors do not match the rank and core dims");
        }
        starts.push([w[0].transpose(), w[1].transpose(), w[2].transpose()]);
    }
    starts.extend((0..opts.restarts).map(|r| random_columns(d.dims(), rank, restart_seed(opts.seed, r))));
    let runs: Vec<CpFactors> = if opts.parallel {
        starts.into_par_iter().map(|c| als(d, c, opts)).collect()
    } else {
        starts.into_iter().map(|c| als(d, c, opts)).collect()
    };
    Ok(pick_best(runs))
}

/// Metric-normalized factors and canonical coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFactors {
    pub factors: [DMatrix<f64>; 3],
    /// Descending, all positive.
    pub lambda: Vec<f64>,
    /// Raw rows kept, in the output order.
    pub kept: Vec<usize>,
    /// Components dropped because a metric norm vanished.
    pub dropped: usize,
}

/// `N_r^ν = (v_r S^ν v_r)^{1/2}`, `u = v/N`, `λ_r = Π_ν N_r^ν`, sorted by
/// descending `λ`. Signs are fixed so that the largest-magnitude entry of
/// each x and y row is positive, with the compensating sign on z.
pub fn normalize_factors(v: &[DMatrix<f64>; 3], overlap: &Kron3) -> Result<NormalizedFactors> {
    let rank = v[0].nrows();
    for a in 0..3 {
        if v[a].nrows() != rank || v[a].ncols() != overlap.dims()[a] {
            return arg(format!(
                "factor {} has shape {}×{}, expected {rank}×{}",
                Axis::ALL[a].name(),
                v[a].nrows(),
                v[a].ncols(),
                overlap.dims()[a]
            ));
        }
    }
    if v.iter().any(|f| f.iter().any(|x| !x.is_finite())) {
        return arg("factor matrices have non-finite entries");
    }
    let mut comps: Vec<(usize, f64, [Vec<f64>; 3])> = Vec::with_capacity(rank);
    for r in 0..rank {
        let mut rows: [Vec<f64>; 3] = Default::default();
        let mut lambda = 1.0;
        let mut vanished = false;
        for a in 0..3 {
            let row = v[a].row(r).transpose();
            let n2 = (row.transpose() * &overlap.factors[a] * &row)[0];
            let n = n2.max(0.0).sqrt();
            if !(n > VANISHING_NORM) {
                vanished = true;
                break;
            }
            lambda *= n;
            rows[a] = row.iter().map(|x| x / n).collect();
        }
        if vanished {
            continue;
        }
        for a in 0..2 {
            let lead = rows[a]
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                rows[a].iter_mut().for_each(|x| *x = -*x);
                rows[2].iter_mut().for_each(|x| *x = -*x);
            }
        }
        comps.push((r, lambda, rows));
    }
    if comps.is_empty() {
        return Err(Error::Degenerate("every CP component vanishes".into()));
    }
    comps.sort_by(|a, b| b.1.total_cmp(&a.1));
    let kept_rank = comps.len();
    let factors = std::array::from_fn(|a| {
        DMatrix::from_fn(kept_rank, overlap.dims()[a], |r, j| comps[r].2[a][j])
    });
    Ok(NormalizedFactors {
        factors,
        lambda: comps.iter().map(|c| c.1).collect(),
        kept: comps.iter().map(|c| c.0).collect(),
        dropped: rank - kept_rank,
    })
}

/// A canonical-form expansion sharing its basis with a Tucker state.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalState {
    pub n_qe: u32,
    pub spec: LorentzianBasisSpec,
    /// Effective rank after dropping vanishing components.
    pub rank: usize,
    /// Raw ALS factors (`R × n_ν`), restricted to kept components.
    pub raw: [DMatrix<f64>; 3],
    /// Metric-normalized factors, rows aligned with `lambda`.
    pub factors: [DMatrix<f64>; 3],
    pub lambda: Vec<f64>,
    pub deviation: f64,
    pub overlap: f64,
    pub norm_sq: f64,
    pub als_residual: f64,
    pub als_sweeps: usize,
    pub regularized: bool,
    pub dropped: usize,
}

impl CanonicalState {
    /// `Σ_r λ_r u_r^x ⊗ u_r^y ⊗ u_r^z` in LF-coefficient space.
    pub fn coefficients(&self) -> Tensor3 {
        reconstruct(&self.factors, Some(&self.lambda))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CanonOverlap {
    pub overlap: f64,
    pub tucker_norm_sq: f64,
    pub canon_norm_sq: f64,
    pub deviation: f64,
}

/// Overlap and deviation of two coefficient tensors under the metric `s`.
///
/// The deviation `1 − ⟨d|e⟩²/(‖d‖²‖e‖²)` is evaluated as the squared norm of
/// the component of `e` orthogonal to `d`, which keeps it accurate when it
/// is tiny.
pub fn coefficient_overlap(d: &Tensor3, e: &Tensor3, s: &Kron3) -> CanonOverlap {
    let sd = s.apply(d);
    let dd = d.dot(&sd);
    let de = e.dot(&sd);
    let ee = s.bilinear(e, e);
    let c = de / dd;
    let mut perp = e.clone();
    perp.as_mut_slice()
        .iter_mut()
        .zip(d.as_slice())
        .for_each(|(p, &x)| *p -= c * x);
    let deviation = if ee > 0.0 {
        let v = (s.bilinear(&perp, &perp) / ee).clamp(0.0, 1.0);
        if v < DEVIATION_FLOOR {
            0.0
        } else {
            v
        }
    } else {
        1.0
    };
    CanonOverlap {
        overlap: de,
        tucker_norm_sq: dd,
        canon_norm_sq: ee,
        deviation,
    }
}

pub fn tucker_canon_overlap(tucker: &TuckerState, canon: &CanonicalState) -> Result<CanonOverlap> {
    if tucker.spec != canon.spec || tucker.n_qe != canon.n_qe {
        return arg("Tucker and canonical states use different Lorentzian bases");
    }
    let s = tucker.spec.overlap(tucker.n_qe)?;
    Ok(coefficient_overlap(&tucker.core, &canon.coefficients(), &s))
}

fn build_canonical(
    tucker: &TuckerState,
    s: &Kron3,
    cp: CpFactors,
) -> Result<CanonicalState> {
    let norm = normalize_factors(&cp.factors, s)?;
    let raw = std::array::from_fn(|a| {
        DMatrix::from_fn(norm.kept.len(), cp.factors[a].ncols(), |r, j| cp.factors[a][(norm.kept[r], j)])
    });
    let e = reconstruct(&norm.factors, Some(&norm.lambda));
    let ov = coefficient_overlap(&tucker.core, &e, s);
    Ok(CanonicalState {
        n_qe: tucker.n_qe,
        spec: tucker.spec.clone(),
        rank: norm.lambda.len(),
        raw,
        factors: norm.factors,
        lambda: norm.lambda,
        deviation: ov.deviation,
        overlap: ov.overlap,
        norm_sq: ov.canon_norm_sq,
        als_residual: cp.residual,
        als_sweeps: cp.sweeps,
        regularized: cp.regularized,
        dropped: norm.dropped,
    })
}

/// Rank-`rank` canonical form of a Tucker state's core.
pub fn canonicalize(tucker: &TuckerState, rank: usize, opts: &CpOptions) -> Result<CanonicalState> {
    let s = tucker.spec.overlap(tucker.n_qe)?;
    build_canonical(tucker, &s, cp_decompose(&tucker.core, rank, opts)?)
}

/// Canonical forms for increasing ranks.
///
/// Each rank after the first also runs ALS from the previous rank's factors
/// with its largest component split in two, and keeps whichever candidate
/// has the smaller deviation, so the deviation never increases along the
/// sweep.
pub fn rank_sweep(tucker: &TuckerState, ranks: &[usize], opts: &CpOptions) -> Result<Vec<CanonicalState>> {
    if ranks.windows(2).any(|w| w[1] <= w[0]) {
        return arg("ranks must be strictly increasing");
    }
    let s = tucker.spec.overlap(tucker.n_qe)?;
    let mut out: Vec<CanonicalState> = Vec::with_capacity(ranks.len());
    for &rank in ranks {
        let fresh = build_canonical(tucker, &s, cp_decompose(&tucker.core, rank, opts)?)?;
        let best = match out.last() {
            Some(prev) if prev.rank < rank => {
                let warm = pad_by_splitting(&prev.raw, rank);
                let cp = cp_decompose_warm(
                    &tucker.core,
                    rank,
                    &CpOptions {
                        restarts: 0,
                        ..opts.clone()
                    },
                    Some(&warm),
                )?;
                let warm_state = build_canonical(tucker, &s, cp)?;
                let cand = if warm_state.deviation < fresh.deviation {
                    warm_state
                } else {
                    fresh
                };
                if cand.deviation <= prev.deviation {
                    cand
                } else {
                    split_state(prev, rank)
                }
            }
            _ => fresh,
        };
        out.push(best);
    }
    Ok(out)
}

/// `prev` rewritten with `rank` components by splitting its largest
/// components; it represents the same state.
fn split_state(prev: &CanonicalState, rank: usize) -> CanonicalState {
    let mut out = prev.clone();
    out.raw = pad_by_splitting(&prev.raw, rank);
    while out.lambda.len() < rank {
        // λ is sorted, so component 0 is the largest
        let half = out.lambda[0] / 2.0;
        out.lambda[0] = half;
        out.lambda.insert(1, half);
        for m in out.factors.iter_mut() {
            let row = m.row(0).clone_owned();
            *m = m.clone().insert_row(1, 0.0);
            m.set_row(1, &row);
        }
        let mut order: Vec<usize> = (0..out.lambda.len()).collect();
        order.sort_by(|&a, &b| out.lambda[b].total_cmp(&out.lambda[a]));
        out.lambda = order.iter().map(|&r| out.lambda[r]).collect();
        for m in out.factors.iter_mut() {
            *m = m.select_rows(&order);
        }
    }
    out.rank = rank;
    out
}

/// Grows `rows` to `rank` components by repeatedly halving the z factor of
/// the largest-norm component into two equal copies; the represented tensor
/// is unchanged.
fn pad_by_splitting(rows: &[DMatrix<f64>; 3], rank: usize) -> [DMatrix<f64>; 3] {
    let mut f = rows.clone();
    while f[0].nrows() < rank {
        let r0 = f[0].nrows();
        let big = (0..r0)
            .max_by(|&a, &b| {
                let n = |r: usize| f.iter().map(|m| m.row(r).norm()).product::<f64>();
                n(a).total_cmp(&n(b))
            })
            .unwrap_or(0);
        for (a, m) in f.iter_mut().enumerate() {
            let mut row = m.row(big).clone_owned();
            if a == 2 {
                row *= 0.5;
                m.set_row(big, &row);
            }
            *m = m.clone().insert_row(r0, 0.0);
            m.set_row(r0, &row);
        }
    }
    f
}

/// `Σ_r λ_r |φ_r^x⟩|φ_r^y⟩|φ_r^z⟩` on the full grid.
pub fn canonical_statevector(
    canon: &CanonicalState,
    cell: &SimulationCell,
    max_qubits: u32,
) -> Result<GridState> {
    let n_qe = cell.qubits_per_axis;
    if n_qe != canon.n_qe {
        return arg("cell resolution differs from the canonical state's");
    }
    check_grid_budget("canonical state", n_qe, max_qubits)?;
    let axis_states = |a: usize| -> Result<Vec<Vec<f64>>> {
        let lfs = canon.spec.states(Axis::ALL[a], n_qe)?;
        Ok((0..canon.rank)
            .map(|r| {
                let mut v = vec![0.0; cell.n_points()];
                for (l, lf) in lfs.iter().enumerate() {
                    let c = canon.factors[a][(r, l)];
                    v.iter_mut().zip(&lf.values).for_each(|(o, x)| *o += c * x);
                }
                v
            })
            .collect())
    };
    let (fx, fy, fz) = (axis_states(0)?, axis_states(1)?, axis_states(2)?);
    Ok(GridState {
        qubits_per_axis: n_qe,
        amplitudes: assemble_separable(cell.n_points(), &canon.lambda, [&fx, &fy, &fz]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::{optimize_widths, tucker_statevector, OptimizeOptions};

    fn rand_tensor(dims: [usize; 3], seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.iter().product();
        Tensor3::from_vec(dims, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn rel_err(d: &Tensor3, f: &[DMatrix<f64>; 3]) -> f64 {
        let rec = reconstruct(f, None);
        let diff: f64 = d.as_slice().iter().zip(rec.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
        (diff / d.norm_sq()).sqrt()
    }

    #[test]
    fn rank_one_is_exact() {
        let d = Tensor3::outer(&[1.0, -2.0, 0.5], &[0.3, 0.7], &[2.0, 1.0, -1.0]);
        let cp = cp_decompose(&d, 1, &CpOptions::default()).unwrap();
        assert!(rel_err(&d, &cp.factors) < 1e-10);
    }

    #[test]
    fn full_rank_is_exact() {
        for seed in 0..3 {
            let d = rand_tensor([3, 3, 3], seed);
            let cp = cp_decompose(&d, 27, &CpOptions::default()).unwrap();
            assert!(rel_err(&d, &cp.factors) < 1e-10, "seed {seed}: {}", rel_err(&d, &cp.factors));
        }
    }

    #[test]
    fn rank_out_of_range() {
        let d = rand_tensor([2, 2, 1], 1);
        assert!(cp_decompose(&d, 0, &CpOptions::default()).is_err());
        assert!(cp_decompose(&d, 5, &CpOptions::default()).is_err());
    }

    #[test]
    fn als_objective_non_increasing() {
        let d = rand_tensor([3, 2, 3], 4);
        let opts = CpOptions {
            restarts: 1,
            ..Default::default()
        };
        let cp = cp_decompose(&d, 2, &opts).unwrap();
        assert!(cp.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300));
    }

    #[test]
    fn parallel_and_serial_agree() {
        let d = rand_tensor([3, 3, 2], 9);
        let par = cp_decompose(&d, 3, &CpOptions::default()).unwrap();
        let ser = cp_decompose(
            &d,
            3,
            &CpOptions {
                parallel: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(par, ser);
    }

    /// Minimum of `‖d − x⊗y⊗z‖²` over unit directions of x and y on a fine
    /// angle grid, with z and the scale solved in closed form.
    fn brute_force_rank_one(d: &Tensor3, steps: usize) -> f64 {
        let mut best = f64::INFINITY;
        for p in 0..steps {
            let tp = std::f64::consts::PI * p as f64 / steps as f64;
            let x = [tp.cos(), tp.sin()];
            for q in 0..steps {
                let tq = std::f64::consts::PI * q as f64 / steps as f64;
                let y = [tq.cos(), tq.sin()];
                let mut zz = 0.0;
                for k in 0..2 {
                    let mut z = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            z += d.get(i, j, k) * x[i] * y[j];
                        }
                    }
                    zz += z * z;
                }
                best = best.min(d.norm_sq() - zz);
            }
        }
        best
    }

    /// Minimum over `x_1, x_2, y_1, y_2` directions of the least-squares
    /// residual with the two z vectors solved exactly.
    fn brute_force_rank_two(d: &Tensor3, steps: usize) -> f64 {
        let dirs: Vec<[f64; 2]> = (0..steps)
            .map(|p| {
                let t = std::f64::consts::PI * p as f64 / steps as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        let mut best = f64::INFINITY;
        for x1 in &dirs {
            for y1 in &dirs {
                for x2 in &dirs {
                    for y2 in &dirs {
                        let a = [x1[0] * y1[0], x1[0] * y1[1], x1[1] * y1[0], x1[1] * y1[1]];
                        let b = [x2[0] * y2[0], x2[0] * y2[1], x2[1] * y2[0], x2[1] * y2[1]];
                        let aa: f64 = a.iter().map(|v| v * v).sum();
                        let ab: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
                        let bb: f64 = b.iter().map(|v| v * v).sum();
                        let g = nalgebra::Matrix2::new(aa, ab, ab, bb);
                        let Some(inv) = g.try_inverse() else { continue };
                        let mut fit = 0.0;
                        for k in 0..2 {
                            let col = [d.get(0, 0, k), d.get(0, 1, k), d.get(1, 0, k), d.get(1, 1, k)];
                            let ra: f64 = a.iter().zip(&col).map(|(u, v)| u * v).sum();
                            let rb: f64 = b.iter().zip(&col).map(|(u, v)| u * v).sum();
                            let rhs = nalgebra::Vector2::new(ra, rb);
                            fit += rhs.dot(&(&inv * rhs));
                        }
                        best = best.min(d.norm_sq() - fit);
                    }
                }
            }
        }
        best.max(0.0)
    }

    #[test]
    fn rank_one_matches_brute_force() {
        let d = rand_tensor([2, 2, 2], 21);
        let cp = cp_decompose(&d, 1, &CpOptions::default()).unwrap();
        let oracle = brute_force_rank_one(&d, 2000);
        assert!(cp.residual <= oracle + 1e-9, "{} vs {oracle}", cp.residual);
        assert!(cp.residual >= oracle - 1e-5, "{} vs {oracle}", cp.residual);
    }

    #[test]
    fn rank_two_matches_brute_force() {
        // A generic real rank-2 tensor: the scan can reach a near-zero
        // residual, and its positive hyperdeterminant certifies rank 2.
        let mut d = Tensor3::outer(&[1.0, 0.3], &[-0.4, 0.9], &[0.7, 0.2]);
        d.add_outer(1.0, &[0.2, -0.8], &[0.6, 0.5], &[-0.3, 1.1]);
        let v = |i: usize, j: usize, k: usize| d.get(i, j, k);
        let hyper = (v(0, 0, 0) * v(1, 1, 1)).powi(2)
            + (v(0, 0, 1) * v(1, 1, 0)).powi(2)
            + (v(0, 1, 0) * v(1, 0, 1)).powi(2)
            + (v(1, 0, 0) * v(0, 1, 1)).powi(2)
            - 2.0
                * (v(0, 0, 0) * v(0, 0, 1) * v(1, 1, 0) * v(1, 1, 1)
                    + v(0, 0, 0) * v(0, 1, 0) * v(1, 0, 1) * v(1, 1, 1)
                    + v(0, 0, 0) * v(0, 1, 1) * v(1, 0, 0) * v(1, 1, 1)
                    + v(0, 0, 1) * v(0, 1, 0) * v(1, 0, 1) * v(1, 1, 0)
                    + v(0, 0, 1) * v(0, 1, 1) * v(1, 1, 0) * v(1, 0, 0)
                    + v(0, 1, 0) * v(0, 1, 1) * v(1, 0, 1) * v(1, 0, 0))
            + 4.0
                * (v(0, 0, 0) * v(0, 1, 1) * v(1, 0, 1) * v(1, 1, 0)
                    + v(0, 0, 1) * v(0, 1, 0) * v(1, 0, 0) * v(1, 1, 1));
        assert!(hyper > 0.0);
        let cp = cp_decompose(&d, 2, &CpOptions::default()).unwrap();
        let oracle = brute_force_rank_two(&d, 36);
        assert!(oracle < 5e-3, "scan resolution too coarse: {oracle}");
        assert!(cp.residual <= oracle + 1e-12, "{} vs {oracle}", cp.residual);
        assert!(cp.residual < 1e-10);
    }

    fn test_spec() -> LorentzianBasisSpec {
        use crate::lorentzian::AxisFunctions;
        LorentzianBasisSpec::new([
            AxisFunctions {
                widths: vec![0.3, 0.5, 0.4],
                centers: vec![12, 16, 20],
            },
            AxisFunctions {
                widths: vec![0.4, 0.6],
                centers: vec![15, 17],
            },
            AxisFunctions {
                widths: vec![0.2, 0.9],
                centers: vec![16, 16],
            },
        ])
    }

    #[test]
    fn normalization_preserves_tensor_and_orders_lambda() {
        let s = test_spec().overlap(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: [DMatrix<f64>; 3] = s.dims().map(|n| DMatrix::from_fn(4, n, |_, _| rng.random_range(-1.0..1.0)));
        let norm = normalize_factors(&v, &s).unwrap();
        let a = reconstruct(&v, None);
        let b = reconstruct(&norm.factors, Some(&norm.lambda));
        assert!(a.max_abs_diff(&b) < 1e-12);
        assert!(norm.lambda.windows(2).all(|w| w[0] >= w[1]));
        assert!(norm.lambda.iter().all(|&l| l > 0.0));
        for a in 0..3 {
            for r in 0..4 {
                let u = norm.factors[a].row(r).transpose();
                let n = (u.transpose() * &s.factors[a] * &u)[0];
                assert!((n - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn euclidean_norms_for_orthonormal_basis() {
        let s = Kron3::new([DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::identity(1, 1)]);
        let v = [
            DMatrix::from_row_slice(1, 2, &[3.0, 4.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 1, &[-2.0]),
        ];
        let norm = normalize_factors(&v, &s).unwrap();
        assert!((norm.lambda[0] - 10.0).abs() < 1e-14);
    }

    #[test]
    fn vanishing_component_dropped() {
        let s = Kron3::new([DMatrix::identity(2, 2), DMatrix::identity(1, 1), DMatrix::identity(1, 1)]);
        let v = [
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        ];
        let norm = normalize_factors(&v, &s).unwrap();
        assert_eq!(norm.dropped, 1);
        assert_eq!(norm.lambda.len(), 1);
    }

    fn fitted() -> (crate::fitting::FitProblem, TuckerState) {
        let p = crate::fitting::tests::two_center_problem(5, 0.1);
        let t = optimize_widths(&p, &OptimizeOptions::default()).unwrap();
        (p, t)
    }

    #[test]
    fn coefficient_overlap_matches_statevectors() {
        let (p, tucker) = fitted();
        let canon = canonicalize(&tucker, 1, &CpOptions::default()).unwrap();
        let ov = tucker_canon_overlap(&tucker, &canon).unwrap();
        let a = tucker_statevector(&tucker.spec, &tucker.core, &p.cell, 8).unwrap();
        let b = canonical_statevector(&canon, &p.cell, 8).unwrap();
        assert!((ov.overlap - a.dot(&b)).abs() < 1e-9);
        assert!((ov.canon_norm_sq - b.norm_sq()).abs() < 1e-9);
        assert!((ov.tucker_norm_sq - 1.0).abs() < 1e-10);
        let direct = 1.0 - a.dot(&b).powi(2) / (a.norm_sq() * b.norm_sq());
        assert!((ov.deviation - direct).abs() < 1e-9);
    }

    #[test]
    fn sweep_is_monotone_and_exact_at_full_rank() {
        let (_, tucker) = fitted();
        let n = tucker.core.len();
        let ranks: Vec<usize> = (1..=n).collect();
        let sweep = rank_sweep(&tucker, &ranks, &CpOptions::default()).unwrap();
        for w in sweep.windows(2) {
            assert!(w[1].deviation <= w[0].deviation, "{} > {}", w[1].deviation, w[0].deviation);
        }
        let last = sweep.last().unwrap();
        assert!(last.deviation < 1e-10);
        assert!((last.norm_sq - 1.0).abs() < 1e-8);
    }

    #[test]
    fn splitting_preserves_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f: [DMatrix<f64>; 3] = [2, 3, 2].map(|n| DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0)));
        let g = pad_by_splitting(&f, 4);
        assert_eq!(g[0].nrows(), 4);
        assert!(reconstruct(&f, None).max_abs_diff(&reconstruct(&g, None)) < 1e-15);
    }

    #[test]
    fn mismatched_spec_rejected() {
        let (_, tucker) = fitted();
        let mut canon = canonicalize(&tucker, 1, &CpOptions::default()).unwrap();
        canon.spec.axes[0].widths[0] += 0.1;
        assert!(tucker_canon_overlap(&tucker, &canon).is_err());
    }
}
