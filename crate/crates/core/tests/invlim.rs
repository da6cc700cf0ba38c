use matchbox::coding::{build_hierarchy, Schedule};
use matchbox::invlim::*;
use matchbox::systems::{System, SystemRef};
use matchbox::tower::square_complex;
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

fn inv(sys: &SystemRef, levels: usize, schedule: Schedule) -> InverseSystem {
    InverseSystem::build(build_hierarchy(sys, levels, None, schedule).unwrap()).unwrap()
}

fn big(v: &[i64]) -> Vec<BigInt> {
    v.iter().map(|&x| BigInt::from(x)).collect()
}

/// det(xI − A) at an integer x, by cofactor expansion.
fn det_shifted(a: &[Vec<i64>], x: i64) -> i64 {
    let n = a.len();
    let m: Vec<Vec<i64>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { x - a[i][j] } else { -a[i][j] }).collect()).collect();
    det(&m)
}

fn det(m: &[Vec<i64>]) -> i64 {
    let n = m.len();
    if n == 0 {
        return 1;
    }
    (0..n)
        .map(|j| {
            let minor: Vec<Vec<i64>> =
                m[1..].iter().map(|r| r.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &v)| v).collect()).collect();
            let s = if j % 2 == 0 { 1 } else { -1 };
            s * m[0][j] * det(&minor)
        })
        .sum()
}

fn rat(a: &[Vec<i64>]) -> Vec<Vec<BigRational>> {
    a.iter().map(|r| r.iter().map(|&v| BigRational::from_integer(v.into())).collect()).collect()
}

#[test]
fn dyadic_circles_and_doubling() {
    let sys = inv(&System::dyadic(), 6, Schedule::SelfSimilar);
    for c in &sys.complexes {
        assert_eq!((c.simplified.vertex_count, c.simplified.edges.len()), (1, 1));
    }
    for m in sys.matrices().unwrap() {
        assert_eq!(m, TransitionMatrix::from_rows(vec![vec![2]]));
    }
    let (h, _) = sys.h1().unwrap();
    assert_eq!(h.rank, 1);
    assert!(!h.drift);
    assert_eq!(h.charpoly, Some(big(&[1, -2])));
}

#[test]
fn odometer_matrices_follow_the_chain() {
    let sys = inv(&System::dyadic(), 3, Schedule::Cylinder);
    let depths: Vec<usize> = sys.hierarchy.levels.iter().map(|l| l.depths.v).collect();
    for (l, m) in sys.matrices().unwrap().iter().enumerate() {
        let ratio = 1i64 << (depths[l + 1] - depths[l]);
        assert_eq!(m, &TransitionMatrix::from_rows(vec![vec![ratio]]));
    }
    assert_eq!(sys.h1().unwrap().0.rank, 1);
}

#[test]
fn fibonacci_golden_mean() {
    let fib = System::fibonacci();
    let sys = inv(&fib, 6, Schedule::SelfSimilar);
    let (h, step) = sys.h1().unwrap();
    assert_eq!(h.rank, 2);
    let step = step.expect("self-similar levels settle");
    // Oracle: characteristic polynomial of the substitution matrix, raised to the step power.
    let sub = fib.substitution().unwrap().matrix();
    let mut a: Vec<Vec<i64>> = sub.iter().map(|r| r.iter().map(|&v| v as i64).collect()).collect();
    for _ in 1..step.power {
        let s: Vec<Vec<i64>> = sub.iter().map(|r| r.iter().map(|&v| v as i64).collect()).collect();
        a = (0..2).map(|i| (0..2).map(|j| (0..2).map(|k| a[i][k] * s[k][j]).sum()).collect()).collect();
    }
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    assert_eq!(h.charpoly, Some(big(&[1, -tr, det])));
    assert_eq!(render_poly(&big(&[1, -1, -1])), "x^2 - x - 1");
}

#[test]
fn thue_morse_cylinder_rank() {
    let sys = inv(&System::thue_morse(), 3, Schedule::Cylinder);
    assert_eq!(sys.h1().unwrap().0.rank, 2);
}

#[test]
fn factorization_on_all_triples() {
    for (sys, sched) in [
        (System::dyadic(), Schedule::SelfSimilar),
        (System::dyadic(), Schedule::Cylinder),
        (System::fibonacci(), Schedule::Cylinder),
        (System::fibonacci(), Schedule::SelfSimilar),
        (System::thue_morse(), Schedule::Cylinder),
    ] {
        let s = inv(&sys, 3, sched);
        let q31 = bonding(&s, 3, 1).unwrap();
        let q21 = bonding(&s, 2, 1).unwrap();
        let q32 = bonding(&s, 3, 2).unwrap();
        assert!(compose_check(&q31, &q21, &q32).unwrap(), "{} {sched:?}", sys.name);
        assert_eq!(q21.matrix.mul(&q32.matrix).unwrap(), q31.matrix);
        assert!(!compose_check(&q31.corrupted(), &q21, &q32).unwrap());
        assert_eq!(compose_check(&q21, &q31, &q32).unwrap_err().code(), "LEVEL_MISMATCH");
    }
}

#[test]
fn column_sums_count_target_chains() {
    let s = inv(&System::fibonacci(), 4, Schedule::SelfSimilar);
    for q in s.bondings().unwrap() {
        let tgt = &s.complexes[q.target - 1];
        let firsts: Vec<usize> = tgt.chains.iter().map(|c| c[0]).collect();
        for (j, path) in q.paths.iter().enumerate() {
            let entries = path.iter().filter(|e| firsts.contains(e)).count() as i64;
            let sum: i64 = (0..q.matrix.rows).map(|i| q.matrix.data[i][j].abs()).sum();
            assert_eq!(sum, entries);
            let len: usize = path.len();
            let whole: usize = path.iter().filter(|e| firsts.contains(e)).map(|&e| tgt.chains[tgt.raw_chain[e]].len()).sum();
            assert_eq!(len, whole);
        }
    }
}

#[test]
fn single_level_has_no_limit() {
    let s = inv(&System::dyadic(), 1, Schedule::Cylinder);
    assert!(s.h1().is_err());
    assert!(h1_limit(&[TransitionMatrix::identity(1)]).is_err());
    let r = thread_check(&s, 100, 0).unwrap();
    assert!(r.passed());
    assert_eq!(r.depth, 1);
}

#[test]
fn threads_dyadic_depth_four() {
    let s = inv(&System::dyadic(), 4, Schedule::SelfSimilar);
    let r = thread_check(&s, 100, 0).unwrap();
    assert!(r.passed(), "{}", r.to_json());
    assert_eq!(r.pairs_tested, 100);
    assert!(r.exhaustive);
    assert_eq!(r.threads_checked, 16);
}

#[test]
fn threads_fibonacci_exhaustive() {
    let s = inv(&System::fibonacci(), 3, Schedule::SelfSimilar);
    let r = thread_check(&s, 100, 0).unwrap();
    assert!(r.passed(), "{}", r.to_json());
    assert!(r.exhaustive);
    // Every level-3 cell starts a thread: its images under the bondings.
    assert_eq!(r.thread_count, s.complexes[2].raw.edges.len());
    assert_eq!(r.threads_checked, r.thread_count);
}

#[test]
fn thread_check_is_seeded() {
    let s = inv(&System::fibonacci(), 3, Schedule::Cylinder);
    let a = thread_check(&s, 50, 7).unwrap();
    let b = thread_check(&s, 50, 7).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn square_bondings_compose() {
    let d2 = System::dyadic_2d();
    let sq: Vec<_> = (1..=3).map(|k| square_complex(&d2, k).unwrap()).collect();
    let q31 = square_bonding(&d2, &sq[2], &sq[0]).unwrap();
    let q21 = square_bonding(&d2, &sq[1], &sq[0]).unwrap();
    let q32 = square_bonding(&d2, &sq[2], &sq[1]).unwrap();
    assert!(square_compose_check(&q31, &q21, &q32).unwrap());
    assert!(square_bonding(&d2, &sq[0], &sq[1]).is_err());
    // Each target square receives index-ratio many source squares.
    let ratio = sq[1].faces.len() / sq[0].faces.len();
    for t in 0..sq[0].faces.len() {
        assert_eq!(q21.face_map.iter().filter(|&&f| f == t).count(), ratio);
    }
}

#[test]
fn matrix_arithmetic() {
    let a = TransitionMatrix::from_rows(vec![vec![1, 1], vec![1, 0]]);
    assert_eq!(a.mul(&TransitionMatrix::identity(2)).unwrap(), a);
    assert_eq!(a.rank(), 2);
    assert!(a.mul(&TransitionMatrix::zeros(3, 1)).is_err());
    assert_eq!(a.to_csv(), "1,1\n1,0\n");
    let nil = TransitionMatrix::from_rows(vec![vec![0, 1], vec![0, 0]]);
    assert_eq!(eventual_restriction(&nil).unwrap().len(), 0);
}

proptest! {
    #[test]
    fn charpoly_matches_determinant(a in proptest::collection::vec(proptest::collection::vec(-4i64..5, 3), 3)) {
        let cp = integer_charpoly(&rat(&a)).unwrap();
        for x in -3i64..4 {
            let v = cp.iter().fold(BigInt::from(0), |acc, c| acc * x + c);
            prop_assert_eq!(v, BigInt::from(det_shifted(&a, x)));
        }
    }

    #[test]
    fn rank_of_products(a in proptest::collection::vec(proptest::collection::vec(-3i64..4, 3), 2),
                        b in proptest::collection::vec(proptest::collection::vec(-3i64..4, 2), 3)) {
        let ma = TransitionMatrix::from_rows(a);
        let mb = TransitionMatrix::from_rows(b);
        let p = ma.mul(&mb).unwrap();
        prop_assert!(p.rank() <= ma.rank().min(mb.rank()));
    }
}
