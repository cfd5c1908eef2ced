use flatkern::geometry::{lattice_from_basis, Lattice, ManifoldKind, ManifoldSpec, SpinStructure};
use flatkern::kernel::{eval_regularized, RegKernelParams};
use flatkern::periodize::{manifold_kernel, two_point_kernel, TruncationPolicy};
use num_complex::Complex64;
use proptest::prelude::*;

fn spec(kind: ManifoldKind, basis: Vec<Vec<f64>>, spin: &[usize]) -> ManifoldSpec {
    let l = lattice_from_basis(basis).unwrap();
    let k = l.rank();
    ManifoldSpec::new(kind, l, SpinStructure::from_indices(k, spin).unwrap()).unwrap()
}

fn sign(spin: &[usize], m: &[i64]) -> f64 {
    let odd = spin.iter().filter(|&&i| m[i].rem_euclid(2) == 1).count();
    if odd % 2 == 0 { 1.0 } else { -1.0 }
}

/// Plain sum over |mᵢ| ≤ M with the deck map written out per kind (n = 2).
fn naive(kind: ManifoldKind, basis: &[Vec<f64>], spin: &[usize], x: &[f64], y: &[f64], t: f64, p: &RegKernelParams) -> Complex64 {
    let m_max = 40i64;
    let mut acc = Complex64::new(0.0, 0.0);
    let k = basis.len();
    let ms: Vec<Vec<i64>> = if k == 1 {
        (-m_max..=m_max).map(|a| vec![a]).collect()
    } else {
        (-m_max..=m_max).flat_map(|a| (-m_max..=m_max).map(move |b| vec![a, b])).collect()
    };
    for m in ms {
        let mut z = x.to_vec();
        match kind {
            ManifoldKind::Torus | ManifoldKind::Cylinder => {
                for (mi, v) in m.iter().zip(basis) {
                    z[0] += *mi as f64 * v[0];
                    z[1] += *mi as f64 * v[1];
                }
            }
            ManifoldKind::Moebius => {
                z[0] += m[0] as f64 * basis[0][0];
                if m[0].rem_euclid(2) == 1 {
                    z[1] = -z[1];
                }
            }
            ManifoldKind::Klein => {
                z[0] += m[0] as f64;
                if m[1].rem_euclid(2) == 1 {
                    z[1] = -z[1];
                }
                z[1] += m[1] as f64;
            }
        }
        let d = [z[0] - y[0], z[1] - y[1]];
        acc += eval_regularized(&d, t, p).unwrap() * sign(spin, &m);
    }
    acc
}

fn pol() -> TruncationPolicy {
    TruncationPolicy::with_tol(1e-13).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn all_kinds_match_naive_sums(
        x0 in -0.5f64..1.5, x1 in -0.5f64..1.5, t in 0.05f64..0.8, eps in 0.4f64..2.0,
        s0 in any::<bool>(), s1 in any::<bool>(),
    ) {
        let p = RegKernelParams::new(eps, 2).unwrap();
        let x = [x0, x1];
        let o = [0.0, 0.0];
        let skew = vec![vec![1.0, 0.0], vec![0.3, 1.2]];
        let square = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let line = vec![vec![1.0, 0.0]];
        let spin2: Vec<usize> = [(s0, 0), (s1, 1)].iter().filter(|a| a.0).map(|a| a.1).collect();
        let spin1: Vec<usize> = if s0 { vec![0] } else { vec![] };
        let cases = [
            (ManifoldKind::Torus, skew.clone(), spin2.clone()),
            (ManifoldKind::Cylinder, line.clone(), spin1.clone()),
            (ManifoldKind::Moebius, line.clone(), spin1.clone()),
            (ManifoldKind::Klein, square.clone(), spin2.clone()),
        ];
        for (kind, basis, spin) in cases {
            let s = spec(kind, basis.clone(), &spin);
            let fast = manifold_kernel(&x, t, &s, &p, &pol()).unwrap();
            let slow = naive(kind, &basis, &spin, &x, &o, t, &p);
            prop_assert!((fast - slow).norm() <= 1e-8, "{kind}: {fast} vs {slow}");
        }
    }

    #[test]
    fn two_point_kernel_matches_naive(
        x0 in 0.0f64..1.0, x1 in 0.0f64..1.0, y0 in 0.0f64..1.0, y1 in 0.0f64..1.0, t in 0.1f64..0.5,
    ) {
        let p = RegKernelParams::new(1.0, 2).unwrap();
        let square = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = spec(ManifoldKind::Klein, square.clone(), &[1]);
        let fast = two_point_kernel(&[x0, x1], &[y0, y1], t, &s, &p, &pol()).unwrap();
        let slow = naive(ManifoldKind::Klein, &square, &[1], &[x0, x1], &[y0, y1], t, &p);
        prop_assert!((fast - slow).norm() <= 1e-8);
    }

    #[test]
    fn moebius_scalar_kernel_equals_cylinder(x0 in -1.0f64..1.0, x1 in -1.0f64..1.0, t in 0.05f64..1.0, pin in any::<bool>()) {
        let p = RegKernelParams::new(1.0, 2).unwrap();
        let spin: Vec<usize> = if pin { vec![0] } else { vec![] };
        let m = spec(ManifoldKind::Moebius, vec![vec![1.0, 0.0]], &spin);
        let c = spec(ManifoldKind::Cylinder, vec![vec![1.0, 0.0]], &spin);
        let a = manifold_kernel(&[x0, x1], t, &m, &p, &pol()).unwrap();
        let b = manifold_kernel(&[x0, x1], t, &c, &p, &pol()).unwrap();
        prop_assert!((a - b).norm() <= 1e-12);
    }
}

#[test]
fn klein_two_point_kernel_differs_from_torus_off_axis() {
    let p = RegKernelParams::new(1.0, 2).unwrap();
    let k = ManifoldSpec::new(ManifoldKind::Klein, Lattice::cubic(2, 1.0).unwrap(), SpinStructure::trivial(2)).unwrap();
    let tor = ManifoldSpec::torus(Lattice::cubic(2, 1.0).unwrap(), SpinStructure::trivial(2)).unwrap();
    let x = [0.3, 0.3];
    let y = [0.5, 0.2];
    let a = two_point_kernel(&x, &y, 0.2, &k, &p, &pol()).unwrap();
    let b = two_point_kernel(&x, &y, 0.2, &tor, &p, &pol()).unwrap();
    assert!((a - b).norm() > 1e-3, "{a} vs {b}");
}

#[test]
fn radius_cap_is_reported() {
    let p = RegKernelParams::new(1e-6, 1).unwrap();
    let s = spec(ManifoldKind::Torus, vec![vec![1.0]], &[]);
    let err = manifold_kernel(&[0.0], 1e6, &s, &p, &TruncationPolicy::new(1e-15, 10.0, false).unwrap()).unwrap_err();
    assert!(matches!(err, flatkern::Error::TruncationRadius { .. }), "{err}");
}
