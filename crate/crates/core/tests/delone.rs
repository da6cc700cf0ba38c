use matchbox::clopen::ClopenSet;
use matchbox::delone::*;
use matchbox::systems::System;
use matchbox::Q;

fn q(n: i64) -> Q {
    Q::from_integer(n)
}

#[test]
fn net_examples() {
    let d = System::dyadic();
    let c = ClopenSet::coset(&d, [0, 0], 2).unwrap();
    let n = net(&d.basepoint(), &c, q(10)).unwrap();
    assert_eq!(n.positions_1d(), vec![q(-8), q(-4), q(0), q(4), q(8)]);
    let fib = System::fibonacci();
    let a = ClopenSet::future_cylinder(&fib, "a").unwrap();
    let n = net(&fib.basepoint(), &a, q(5)).unwrap();
    let fwd: Vec<Q> = n.positions_1d().into_iter().filter(|x| *x >= q(0)).collect();
    assert_eq!(fwd, vec![q(0), q(2), q(3), q(5)]);
    let all = net(&fib.basepoint(), &ClopenSet::whole(&fib), q(3)).unwrap();
    assert_eq!(all.positions_1d(), (-3..=3).map(q).collect::<Vec<_>>());
}

#[test]
fn stats_examples() {
    let fib = System::fibonacci();
    let a = ClopenSet::future_cylinder(&fib, "a").unwrap();
    let s = stats(&net(&fib.basepoint(), &a, q(40)).unwrap(), 16).unwrap();
    assert_eq!((s.lambda1, s.covering_radius, s.alpha_w, s.e_w), (q(1), q(1), 1, q(3)));
    let d = System::dyadic();
    let c = ClopenSet::coset(&d, [0, 0], 2).unwrap();
    let s = stats(&net(&d.basepoint(), &c, q(20)).unwrap(), 16).unwrap();
    assert_eq!((s.lambda1, s.covering_radius, s.alpha_w, s.e_w), (q(4), q(2), 3, q(7)));
}

#[test]
fn lambda1_profile_examples() {
    let d = System::dyadic();
    let lv: Vec<ClopenSet> = (1..=3).map(|k| ClopenSet::coset(&d, [0, 0], k).unwrap()).collect();
    assert_eq!(lambda1_profile(&lv, &d.basepoint(), q(40)).unwrap(), vec![q(2), q(4), q(8)]);
    let fib = System::fibonacci();
    let lv = vec![
        ClopenSet::future_cylinder(&fib, "a").unwrap(),
        ClopenSet::future_cylinder(&fib, "aa").unwrap(),
    ];
    assert_eq!(lambda1_profile(&lv, &fib.basepoint(), q(40)).unwrap(), vec![q(1), q(3)]);
    let g = return_gaps(&lv[1]).unwrap();
    assert_eq!((g.min_gap, g.max_gap), (3, 5));
}
