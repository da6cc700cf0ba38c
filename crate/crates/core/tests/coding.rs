use matchbox::clopen::{ClopenSet, Cylinder, Partition};
use matchbox::coding::*;
use matchbox::holonomy::Direction;
use matchbox::systems::{System, SystemRef};
use matchbox::Q;
use proptest::prelude::*;

fn fut(sys: &SystemRef, w: &str) -> ClopenSet {
    ClopenSet::future_cylinder(sys, w).unwrap()
}

fn letters(sys: &SystemRef) -> Partition {
    let whole = ClopenSet::whole(sys);
    Partition::new(whole, vec![fut(sys, "a"), fut(sys, "b")]).unwrap()
}

fn block(p: &Partition, s: &ClopenSet) -> usize {
    p.blocks.iter().position(|b| b == s).unwrap()
}

#[test]
fn fibonacci_code_of_aab() {
    let fib = System::fibonacci();
    let p = letters(&fib);
    let (a, b) = (block(&p, &fut(&fib, "a")), block(&p, &fut(&fib, "b")));
    let cw = code(&fut(&fib, "aab"), &[[0, 0], [1, 0], [2, 0]], &p).unwrap();
    let got: Vec<usize> = cw.entries.values().copied().collect();
    assert_eq!(got, vec![a, a, b]);
}

#[test]
fn code_with_identity_only() {
    let fib = System::fibonacci();
    let p = letters(&fib);
    let cw = code(&fut(&fib, "ba"), &[[0, 0]], &p).unwrap();
    assert_eq!(cw.entries.len(), 1);
    assert_eq!(cw.entries[&[0, 0]], block(&p, &fut(&fib, "b")));
}

#[test]
fn code_splits_large_sets() {
    let fib = System::fibonacci();
    let err = code(&fut(&fib, "a"), &[[1, 0]], &letters(&fib)).unwrap_err();
    assert_eq!(err.code(), "BLOCK_SPLIT");
}

#[test]
fn dyadic_parity_code() {
    let d = System::dyadic();
    let whole = ClopenSet::whole(&d);
    let even = ClopenSet::coset(&d, [0, 0], 1).unwrap();
    let odd = ClopenSet::coset(&d, [1, 0], 1).unwrap();
    let p = Partition::new(whole, vec![even.clone(), odd.clone()]).unwrap();
    let u = ClopenSet::coset(&d, [2, 0], 2).unwrap();
    let cw = code(&u, &[[0, 0], [1, 0], [2, 0]], &p).unwrap();
    let (e, o) = (block(&p, &even), block(&p, &odd));
    assert_eq!(cw.entries.values().copied().collect::<Vec<_>>(), vec![e, o, e]);
}

#[test]
fn refine_fibonacci_a_block() {
    let fib = System::fibonacci();
    let a = fut(&fib, "a");
    let p = letters(&fib);
    let w = fib.basepoint();
    let r = refine_by_code(&a, &w, &a, &p, Q::from_integer(2), Direction::Forward, 1 << 12).unwrap();
    let mut got = r.blocks.clone();
    got.sort();
    let mut want = vec![fut(&fib, "aa"), fut(&fib, "ab")];
    want.sort();
    assert_eq!(got, want);
    assert!(r.blocks[0].contains_point(&w));
}

#[test]
fn refine_with_zero_radius_is_identity() {
    let fib = System::fibonacci();
    let a = fut(&fib, "a");
    let r = refine_by_code(&a, &fib.basepoint(), &a, &letters(&fib), Q::from_integer(0), Direction::Both, 1 << 12)
        .unwrap();
    assert_eq!(r.blocks, vec![a]);
}

#[test]
fn refine_dyadic_by_parity() {
    let d = System::dyadic();
    let whole = ClopenSet::whole(&d);
    let p = Partition::new(
        whole.clone(),
        vec![ClopenSet::coset(&d, [0, 0], 1).unwrap(), ClopenSet::coset(&d, [1, 0], 1).unwrap()],
    )
    .unwrap();
    let r = refine_by_code(&whole, &d.basepoint(), &whole, &p, Q::from_integer(2), Direction::Forward, 1 << 12)
        .unwrap();
    // Oracle: group the depth-3 cosets by the parities of x, x + 1, x + 2.
    let mut groups: std::collections::BTreeMap<[i64; 3], Vec<Cylinder>> = Default::default();
    for x in 0..8i64 {
        let key = [x % 2, (x + 1) % 2, (x + 2) % 2];
        groups.entry(key).or_default().push(Cylinder::Coset { depth: 3, rep: [x, 0] });
    }
    let mut want: Vec<ClopenSet> = groups.into_values().map(|cs| ClopenSet::from_cylinders(&d, cs)).collect();
    want.sort();
    let mut got = r.blocks.clone();
    got.sort();
    assert_eq!(got, want);
    assert_eq!(got.len(), 2);
}

#[test]
fn dyadic_cylinder_hierarchy() {
    let d = System::dyadic();
    let h = build_hierarchy(&d, 3, None, Schedule::Cylinder).unwrap();
    assert_eq!(h.levels.len(), 3);
    let mut last = None;
    for l in &h.levels {
        assert_eq!(l.v_windows.len(), 1);
        let Cylinder::Coset { depth, rep } = l.v_windows[0] else { panic!("odometer levels are cosets") };
        assert_eq!(rep, [0, 0]);
        if let Some(prev) = last {
            assert!(depth > prev);
        }
        last = Some(depth);
        assert!(check_level(l).ok(), "{:?}", check_level(l).failures);
        assert!(check_level_clopen(l).unwrap().ok());
    }
    for w in h.levels.windows(2) {
        assert!(w[1].constants.eps < w[0].constants.eps);
        assert!(w[1].constants.eps <= w[0].constants.eps.half());
    }
}

/// Least gap between starts of `word` in a long fixed-point prefix.
fn min_gap(sys: &SystemRef, word: &[u8]) -> i64 {
    let text = sys.substitution().unwrap().fixed_point_prefix(1 << 14);
    let starts: Vec<usize> = (0..=text.len() - word.len()).filter(|&i| &text[i..i + word.len()] == word).collect();
    starts.windows(2).map(|w| (w[1] - w[0]) as i64).min().unwrap()
}

#[test]
fn fibonacci_second_level_from_a() {
    let fib = System::fibonacci();
    let h = build_hierarchy(&fib, 2, Some(&fut(&fib, "a")), Schedule::Cylinder).unwrap();
    let l2 = &h.levels[1];
    assert!(l2.depths.v >= 3);
    assert!(l2.v_set().contains_point(&fib.basepoint()));
    assert!(l2.constants.lambda1 > h.levels[0].constants.r);
    // Every V₂ window has the same least return gap as measured on the fixed point.
    let Some(w) = l2.v_windows[0].word() else { panic!("substitution levels are words") };
    let lam = l2.v_windows.iter().map(|c| min_gap(&fib, c.word().unwrap())).min().unwrap();
    assert!(w.len() >= 3);
    assert!(Q::from_integer(lam) >= l2.constants.lambda1);
}

#[test]
fn single_level() {
    let tm = System::thue_morse();
    let h = build_hierarchy(&tm, 1, None, Schedule::Cylinder).unwrap();
    assert_eq!(h.levels.len(), 1);
    assert!(check_level(&h.levels[0]).ok());
}

#[test]
fn zero_levels_rejected() {
    assert!(build_hierarchy(&System::dyadic(), 0, None, Schedule::Cylinder).is_err());
}

#[test]
fn coding_soundness_depth_three() {
    for sys in [System::dyadic(), System::fibonacci(), System::thue_morse()] {
        let h = build_hierarchy(&sys, 3, None, Schedule::Cylinder).unwrap();
        for l in &h.levels {
            let rep = check_level(l);
            assert!(rep.ok(), "{} level {}: {:?}", sys.name, l.level, rep.failures);
            assert!(rep.diameter_violations.is_empty());
            assert!(rep.germ_checks > 0);
        }
    }
}

#[test]
fn hierarchy_dump_is_deterministic() {
    let fib = System::fibonacci();
    let a = build_hierarchy(&fib, 3, None, Schedule::Cylinder).unwrap().dump();
    let b = build_hierarchy(&fib, 3, None, Schedule::Cylinder).unwrap().dump();
    assert_eq!(a, b);
}

#[test]
fn too_shallow_scan_reports_depth() {
    let fib = System::fibonacci();
    let err = build_hierarchy_with(&fib, 3, None, Schedule::Cylinder, 64).unwrap_err();
    assert_eq!(err.code(), "DEPTH_INSUFFICIENT");
    let need = sufficient_scan_depth(&fib, 3, Schedule::Cylinder, 64, 1 << 22).unwrap();
    assert!(build_hierarchy_with(&fib, 3, None, Schedule::Cylinder, need).is_ok());
    assert!(build_hierarchy_with(&fib, 3, None, Schedule::Cylinder, need - 1).is_err());
}

fn legal_word(len: usize) -> impl Strategy<Value = Vec<u8>> {
    let text = System::fibonacci().substitution().unwrap().fixed_point_prefix(4096);
    (0..4096 - len).prop_map(move |i| text[i..i + len].to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The code of a future cylinder reads off its letters.
    #[test]
    fn code_reads_letters(w in legal_word(6), ks in proptest::collection::btree_set(0i64..6, 1..6)) {
        let fib = System::fibonacci();
        let s: String = w.iter().map(|&c| fib.substitution().unwrap().symbol(c)).collect();
        let p = letters(&fib);
        let germs: Vec<[i64; 2]> = ks.iter().map(|&k| [k, 0]).collect();
        let cw = code(&fut(&fib, &s), &germs, &p).unwrap();
        for (n, i) in &cw.entries {
            let letter = &s[n[0] as usize..n[0] as usize + 1];
            prop_assert_eq!(*i, block(&p, &fut(&fib, letter)));
        }
    }

    /// Refining a set never changes its code.
    #[test]
    fn code_is_inherited(w in legal_word(5), extra in 1usize..4) {
        let fib = System::fibonacci();
        let sub = fib.substitution().unwrap();
        let s: String = w.iter().map(|&c| sub.symbol(c)).collect();
        let p = letters(&fib);
        let germs = [[0, 0], [2, 0], [4, 0]];
        let parent = code(&fut(&fib, &s), &germs, &p).unwrap();
        for c in fut(&fib, &s).refine_to(5 + extra + 1) {
            let child = code(&ClopenSet::cylinder(&fib, c), &germs, &p).unwrap();
            prop_assert_eq!(&child, &parent);
        }
    }
}
