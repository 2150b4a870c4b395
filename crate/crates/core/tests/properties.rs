use mflo_core::basis::build_ideal_state;
use mflo_core::fitting::{m_integral, overlap_3d, t_tensor};
use mflo_core::{
    Axis, AxisFunctions, ContractedGaussianAO, FitProblem, Lorentzian1D, LorentzianBasisSpec,
    MolecularOrbital, SimulationCell,
};
use proptest::prelude::*;

fn cell() -> SimulationCell {
    SimulationCell::cube([-4.0; 3], 8.0, 5).unwrap()
}

fn axis(widths: &[f64], centers: &[usize]) -> AxisFunctions {
    AxisFunctions { widths: widths.to_vec(), centers: centers.to_vec() }
}

fn s_orbital(gamma: f64, center: [f64; 3]) -> MolecularOrbital {
    let ao = ContractedGaussianAO::from_normalized_primitives(vec![gamma], vec![1.0], [0, 0, 0], center).unwrap();
    MolecularOrbital::new(vec![ao], vec![1.0]).unwrap()
}

#[test]
fn odd_power_integral_vanishes_against_a_centered_lorentzian() {
    let ao = ContractedGaussianAO::new(vec![2.0], vec![1.0], [1, 0, 0], [0.0; 3]).unwrap();
    for width in [0.05, 0.4, 3.0] {
        let m = m_integral(&ao, Axis::X, 0, width, 16, &cell()).unwrap();
        assert!(m.abs() < 1e-12, "width {width}: {m}");
    }
    let even = m_integral(&ao, Axis::Y, 0, 0.4, 16, &cell()).unwrap();
    assert!(even > 0.1);
}

#[test]
fn single_product_t_matches_grid_sum() {
    let c = cell();
    let mo = s_orbital(0.9, [0.3, -0.2, 0.1]);
    let spec = LorentzianBasisSpec::new([axis(&[0.4], &[17]), axis(&[0.6], &[15]), axis(&[0.5], &[16])]);
    let p = FitProblem::new(mo.clone(), c.clone(), spec, 0.0).unwrap();
    let t = t_tensor(&p).unwrap().values;
    assert_eq!(t.dims(), [1, 1, 1]);

    let (ideal, _) = build_ideal_state(&mo, &c, 8).unwrap();
    let lx = Lorentzian1D::new(5, 0.4, 17).unwrap().values;
    let ly = Lorentzian1D::new(5, 0.6, 15).unwrap().values;
    let lz = Lorentzian1D::new(5, 0.5, 16).unwrap().values;
    let mut sum = 0.0;
    for i in 0..32 {
        for j in 0..32 {
            for k in 0..32 {
                sum += ideal.amplitudes[ideal.index(i, j, k)] * lx[i] * ly[j] * lz[k];
            }
        }
    }
    assert!((t.as_slice()[0] - sum).abs() < 1e-12, "{} vs {sum}", t.as_slice()[0]);
}

#[test]
fn single_function_overlap_is_one() {
    let spec = LorentzianBasisSpec::new([axis(&[0.3], &[3]), axis(&[1.1], &[9]), axis(&[7.0], &[30])]);
    let s = overlap_3d(&spec, 5).unwrap();
    assert_eq!(s.shape(), (1, 1));
    assert!((s[(0, 0)] - 1.0).abs() < 1e-14);
}

#[test]
fn translation_on_the_grid_leaves_t_unchanged() {
    let c = cell();
    let spec = |shift: usize| {
        LorentzianBasisSpec::new([
            axis(&[0.3, 0.5], &[14 + shift, 18 + shift]),
            axis(&[0.4], &[16]),
            axis(&[0.35, 0.8], &[16, 16]),
        ])
    };
    let spacing = c.spacing(Axis::X);
    let t0 = t_tensor(&FitProblem::new(s_orbital(2.0, [0.0; 3]), c.clone(), spec(0), 0.0).unwrap()).unwrap();
    let t2 = t_tensor(&FitProblem::new(s_orbital(2.0, [2.0 * spacing, 0.0, 0.0]), c, spec(2), 0.0).unwrap()).unwrap();
    assert!(t0.values.max_abs_diff(&t2.values) < 1e-9);
    assert_ne!(t0.provenance, t2.provenance);
}

fn spec_strategy() -> impl Strategy<Value = LorentzianBasisSpec> {
    let ax = prop::collection::vec((0.01f64..10.0, 0usize..16), 1..4).prop_map(|fs| {
        let (widths, centers): (Vec<f64>, Vec<usize>) = fs.into_iter().unzip();
        AxisFunctions { widths, centers }
    });
    (ax.clone(), ax.clone(), ax).prop_map(|(x, y, z)| LorentzianBasisSpec::new([x, y, z]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_overlap_is_a_psd_kronecker_product(spec in spec_strategy()) {
        prop_assume!(spec.validate(4).is_ok());
        let s = overlap_3d(&spec, 4).unwrap();
        let states: Vec<Vec<Lorentzian1D>> = Axis::ALL.iter().map(|&a| spec.states(a, 4).unwrap()).collect();
        let [nx, ny, nz] = spec.counts();
        let dot = |a: &Lorentzian1D, b: &Lorentzian1D| a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>();
        for l in 0..nx * ny * nz {
            for m in 0..nx * ny * nz {
                let (li, lj, lk) = (l / (ny * nz), (l / nz) % ny, l % nz);
                let (mi, mj, mk) = (m / (ny * nz), (m / nz) % ny, m % nz);
                let want = dot(&states[0][li], &states[0][mi])
                    * dot(&states[1][lj], &states[1][mj])
                    * dot(&states[2][lk], &states[2][mk]);
                prop_assert!((s[(l, m)] - want).abs() < 1e-12);
            }
        }
        let min = s.clone().symmetric_eigen().eigenvalues.min();
        prop_assert!(min > -1e-12, "min eigenvalue {}", min);
    }
}
