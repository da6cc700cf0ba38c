use matchbox::clopen::ClopenSet;
use matchbox::holonomy::*;
use matchbox::systems::{Dist, System};
use matchbox::Q;

#[test]
fn apply_examples() {
    let fib = System::fibonacci();
    let s = fib.substitution().unwrap();
    let w = fib.basepoint();
    let x = HolonomyElement::shift(&fib, [1, 0]).apply(&w).unwrap();
    assert_eq!(s.base_slice(x.offset[0], x.offset[0] + 4).to_vec(), vec![1, 0, 0, 1]);
    assert_eq!(HolonomyElement::identity(&fib).apply(&w).unwrap(), w);
    let d = System::dyadic();
    let p = d.point([3, 0]);
    let q = HolonomyElement::shift(&d, [1, 0]).apply(&p).unwrap();
    assert_eq!(q.cylinder(2), ClopenSet::coset(&d, [0, 0], 2).unwrap().cylinders()[0]);
    assert_eq!(q.cylinder(3), ClopenSet::coset(&d, [4, 0], 3).unwrap().cylinders()[0]);
}

#[test]
fn compose_examples() {
    let fib = System::fibonacci();
    let f = |w: &str| ClopenSet::future_cylinder(&fib, w).unwrap();
    let h1 = HolonomyElement::new([1, 0], f("ab"));
    let h2 = HolonomyElement::new([1, 0], f("b"));
    let c = compose(&h2, &h1).unwrap();
    assert_eq!(c.exponent, [2, 0]);
    assert_eq!(c.domain, f("ab"));
    let a = HolonomyElement::new([1, 0], f("a"));
    let c = compose(&a, &a).unwrap();
    assert_eq!(c.domain, f("aa"));
    let back = compose(&h1.inverse(), &h1).unwrap();
    assert_eq!(back.exponent, [0, 0]);
    assert_eq!(back.domain, h1.domain);
}

#[test]
fn germ_examples() {
    let fib = System::fibonacci();
    let w = fib.basepoint();
    let x = ClopenSet::whole(&fib);
    let s2 = HolonomyElement::new([2, 0], x.clone());
    let s3 = HolonomyElement::new([3, 0], x.clone());
    assert!(germ_equal(&s2, &s2.clone(), &w).unwrap());
    assert!(!germ_equal(&s2, &s3, &w).unwrap());
    assert!(!germ_equal(&HolonomyElement::identity(&fib), &s3, &w).unwrap());
}

#[test]
fn filtration_examples() {
    let fib = System::fibonacci();
    let w = fib.basepoint();
    let a = ClopenSet::future_cylinder(&fib, "a").unwrap();
    let f = filtration_dir(&w, &a, Q::from_integer(3), 8, Direction::Forward).unwrap();
    assert_eq!(f.exponents(), vec![[0, 0], [2, 0], [3, 0]]);
    let f0 = filtration(&w, &a, Q::from_integer(0), 8).unwrap();
    assert_eq!(f0.exponents(), vec![[0, 0]]);
    let d = System::dyadic();
    let c = ClopenSet::coset(&d, [0, 0], 2).unwrap();
    let f = filtration(&d.basepoint(), &c, Q::from_integer(8), 8).unwrap();
    let e: Vec<i64> = f.exponents().iter().map(|v| v[0]).collect();
    assert_eq!(e, vec![-8, -4, 0, 4, 8]);
    assert!(f.dump().lines().count() == 5);
}

#[test]
fn induced_generator_examples() {
    let fib = System::fibonacci();
    let f = |w: &str| ClopenSet::future_cylinder(&fib, w).unwrap();
    let g = induced_generators(&f("a"), 64).unwrap();
    assert_eq!(g.generators.len(), 2);
    assert_eq!((g.generators[0].exponent, &g.generators[0].domain), ([1, 0], &f("aa")));
    assert_eq!((g.generators[1].exponent, &g.generators[1].domain), ([2, 0], &f("ab")));
    let d = System::dyadic();
    let c = ClopenSet::coset(&d, [0, 0], 1).unwrap();
    let g = induced_generators(&c, 64).unwrap();
    assert_eq!(g.generators.len(), 1);
    assert_eq!(g.generators[0].exponent, [2, 0]);
    let g = induced_generators(&ClopenSet::whole(&fib), 64).unwrap();
    assert_eq!(g.generators.len(), 1);
    assert_eq!(g.generators[0].exponent, [1, 0]);
}

#[test]
fn classify_examples() {
    let fib = System::fibonacci();
    assert_eq!(
        classify_at_depth(&fib, 8, Dist::pow(1)).unwrap(),
        Evidence::Expansive { eps: Dist::pow(1) }
    );
    let d = System::dyadic();
    assert_eq!(classify_at_depth(&d, 8, Dist::pow(1)).unwrap(), Evidence::Equicontinuous);
    assert_eq!(classify_at_depth(&fib, 0, Dist::pow(1)).unwrap_err().code(), "INCONCLUSIVE");
}
