use bismut_core::linalg::{Mat4, Vec4};
use bismut_core::multilinear::{interior_bilinear, interior_linear, omit, pair, push_all, wedge, MultiVector};
use bismut_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

type MV = MultiVector<f64>;

fn e(i: usize) -> Vec4<f64> {
    Vec4::ith(i, 1.0)
}

fn gram_det(a: &[Vec4<f64>], b: &[Vec4<f64>]) -> f64 {
    let n = a.len();
    DMatrix::from_fn(n, n, |i, j| a[i].dot(&b[j])).determinant()
}

fn close(a: &MV, b: &MV, tol: f64) -> bool {
    (*a - *b).max_abs() <= tol * (1.0 + a.max_abs().max(b.max_abs()))
}

fn vec4() -> impl Strategy<Value = Vec4<f64>> {
    prop::array::uniform4(-2.0f64..2.0).prop_map(Vec4::from)
}

fn vecs(n: usize) -> impl Strategy<Value = Vec<Vec4<f64>>> {
    prop::collection::vec(vec4(), n)
}

#[test]
fn two_vector_entries_follow_determinant_normalisation() {
    let w = MV::primitive(&[e(0), e(1)]).unwrap();
    assert_eq!(w.get(&[0, 1]), 1.0);
    assert_eq!(w.get(&[1, 0]), -1.0);
    assert_eq!(w.get(&[0, 0]), 0.0);
    assert!((w.norm() - 1.0).abs() < 1e-15);
    let w3 = MV::primitive(&[e(0), e(1), e(2)]).unwrap();
    assert_eq!(w3.get(&[2, 0, 1]), 1.0);
    assert_eq!(w3.get(&[1, 0, 2]), -1.0);
    assert!((w3.norm() - 1.0).abs() < 1e-15);
}

#[test]
fn wedge_beyond_the_cap_is_an_error() {
    let a = MV::primitive(&[e(0), e(1)]).unwrap();
    let b = MV::primitive(&[e(2), e(3)]).unwrap();
    assert!(matches!(wedge(&a, &b), Err(Error::DegreeOverflow { degree: 4, .. })));
    assert!(MV::try_zero(4).is_err());
}

#[test]
fn scalar_wedge_is_scaling() {
    let v = MV::vector(&Vec4::new(1.0, -2.0, 0.5, 3.0));
    let s = MV::scalar(2.5);
    assert_eq!(wedge(&s, &v).unwrap(), v * 2.5);
    assert_eq!(wedge(&v, &s).unwrap(), v * 2.5);
}

#[test]
fn interior_product_of_a_simple_three_vector() {
    let b = [e(0), e(1), e(2)];
    let v = MV::primitive(&b).unwrap();
    let got = interior_linear(&Vec4::new(1.0, 2.0, 3.0, 4.0), &v).unwrap();
    let want = MV::primitive(&[e(1), e(2)]).unwrap() * 1.0 - MV::primitive(&[e(0), e(2)]).unwrap() * 2.0
        + MV::primitive(&[e(0), e(1)]).unwrap() * 3.0;
    assert!(close(&got, &want, 1e-14));
    assert!(interior_linear(&e(0), &MV::scalar(1.0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairing_of_primitives_is_the_gram_determinant(a in vecs(3), b in vecs(3), q in 1usize..=3) {
        let got = pair(&MV::primitive(&a[..q]).unwrap(), &MV::primitive(&b[..q]).unwrap()).unwrap();
        let want = gram_det(&a[..q], &b[..q]);
        prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn primitive_is_multilinear(a in vec4(), c in vec4(), rest in vecs(2), s in -3.0f64..3.0) {
        let mut x = vec![a + c * s];
        x.extend(&rest);
        let mut y = vec![a];
        y.extend(&rest);
        let mut z = vec![c];
        z.extend(&rest);
        let lhs = MV::primitive(&x).unwrap();
        let rhs = MV::primitive(&y).unwrap() + MV::primitive(&z).unwrap() * s;
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn primitive_alternates(v in vecs(3)) {
        let p = MV::primitive(&v).unwrap();
        prop_assert!(p.is_alternating(1e-12));
        let swapped = MV::primitive(&[v[1], v[0], v[2]]).unwrap();
        prop_assert!(close(&swapped, &(-p), 1e-12));
        let repeated = MV::primitive(&[v[0], v[1], v[0]]).unwrap();
        prop_assert!(repeated.max_abs() <= 1e-12 * (1.0 + p.max_abs()));
    }

    #[test]
    fn wedge_is_associative_and_builds_primitives(v in vecs(3)) {
        let [a, b, c] = [MV::vector(&v[0]), MV::vector(&v[1]), MV::vector(&v[2])];
        let left = wedge(&wedge(&a, &b).unwrap(), &c).unwrap();
        let right = wedge(&a, &wedge(&b, &c).unwrap()).unwrap();
        let prim = MV::primitive(&v).unwrap();
        prop_assert!(close(&left, &prim, 1e-12));
        prop_assert!(close(&right, &prim, 1e-12));
    }

    #[test]
    fn push_forward_maps_factors(v in vecs(3), m in prop::array::uniform16(-1.5f64..1.5), q in 0usize..=3) {
        let a = Mat4::from_column_slice(&m);
        let pushed: Vec<Vec4<f64>> = v[..q].iter().map(|x| a * x).collect();
        let want = if q == 0 { MV::scalar(1.0) } else { MV::primitive(&pushed).unwrap() };
        let start = if q == 0 { MV::scalar(1.0) } else { MV::primitive(&v[..q]).unwrap() };
        prop_assert!(close(&push_all(&a, &start), &want, 1e-11));
    }

    #[test]
    fn interior_linear_expands_over_factors(v in vecs(3), a in vec4(), q in 1usize..=3) {
        let b = &v[..q];
        let got = interior_linear(&a, &MV::primitive(b).unwrap()).unwrap();
        let mut want = MV::zero(q - 1);
        for j in 0..q {
            let rest = omit(b, &[j]);
            let term = if rest.is_empty() { MV::scalar(1.0) } else { MV::primitive(&rest).unwrap() };
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            want += term * (sign * a.dot(&b[j]));
        }
        prop_assert!(close(&got, &want, 1e-11));
    }

    #[test]
    fn interior_bilinear_expands_over_pairs(v in vecs(3), w in vec4(), q in 2usize..=3) {
        let f = |x: &Vec4<f64>, y: &Vec4<f64>| w * (x[0] * y[1] - x[1] * y[0]) + Vec4::new(x[2] * y[3] - x[3] * y[2], 0.0, 0.0, 0.0);
        let b = &v[..q];
        let got = interior_bilinear(&MV::primitive(b).unwrap(), f).unwrap();
        let mut want = MV::zero(q - 1);
        for i in 0..q {
            for j in i + 1..q {
                let mut fs = vec![f(&b[i], &b[j])];
                fs.extend(omit(b, &[i, j]));
                let sign = if (i + j + 1) % 2 == 0 { 1.0 } else { -1.0 };
                want += MV::primitive(&fs).unwrap() * sign;
            }
        }
        prop_assert!(close(&got, &want, 1e-11));
    }
}
