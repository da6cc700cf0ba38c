use std::collections::BTreeSet;

use matchbox::clopen::{ClopenSet, Cylinder};
use matchbox::coding::*;
use matchbox::systems::System;
use matchbox::tower::*;
use matchbox::Q;
use proptest::prelude::*;

fn unit_edge(from: usize, to: usize) -> GraphEdge {
    GraphEdge { from, to, symbol: "a".into(), length: Q::from_integer(1) }
}

/// Starts of `w` in the Fibonacci fixed point, read from a long prefix.
fn starts(w: &[u8], n: usize) -> Vec<usize> {
    let text = System::fibonacci().substitution().unwrap().fixed_point_prefix(n);
    (0..=text.len() - w.len()).filter(|&i| &text[i..i + w.len()] == w).collect()
}

#[test]
fn fibonacci_aa_heights() {
    let fib = System::fibonacci();
    let level = word_level(&fib, "aa", 1 << 12).unwrap();
    let t = build_tower(&level).unwrap();
    // Oracle: gaps between consecutive occurrences of "aa".
    let s = starts(&[0, 0], 4096);
    let gaps: BTreeSet<usize> = s.windows(2).map(|w| w[1] - w[0]).collect();
    assert_eq!(&s[..4], &[2, 7, 10, 15]);
    assert_eq!(gaps, BTreeSet::from([3, 5]));
    assert_eq!(t.heights(), gaps);
    let words: BTreeSet<&[u8]> = t.columns.iter().map(|c| c.word.as_slice()).collect();
    assert_eq!(words, BTreeSet::from([&[0u8, 0, 1][..], &[0, 0, 1, 0, 1][..]]));
}

#[test]
fn fibonacci_aa_complex() {
    let fib = System::fibonacci();
    let t = build_tower(&word_level(&fib, "aa", 1 << 12).unwrap()).unwrap();
    let c = collapse(&t).unwrap();
    assert_eq!(c.raw.edges.len(), t.cell_count());
    assert!(c.simplified.is_connected());
    assert!(c.simplified.is_strongly_connected());
    assert_eq!(c.raw.euler_characteristic(), c.simplified.euler_characteristic());
    let total: Q = c.raw.edges.iter().map(|e| e.length).sum();
    let simple: Q = c.simplified.edges.iter().map(|e| e.length).sum();
    assert_eq!(total, simple);
    // Every simplified edge is a concatenation of the two return words.
    for e in &c.simplified.edges {
        let mut rest = e.symbol.as_str();
        while !rest.is_empty() {
            rest = rest.strip_prefix("aabab").or_else(|| rest.strip_prefix("aab")).expect("return-word factorization");
        }
    }
}

#[test]
fn dyadic_four_columns() {
    let d = System::dyadic();
    let v = ClopenSet::coset(&d, [0, 0], 2).unwrap();
    let h = build_hierarchy(&d, 1, Some(&v), Schedule::Cylinder).unwrap();
    let t = build_tower(&h.levels[0]).unwrap();
    assert_eq!(t.heights(), BTreeSet::from([4]));
    assert_eq!(t.columns.len(), 4);
    // The return +4 permutes the four depth-4 cosets of 4ℤ₂ cyclically.
    for c in &t.columns {
        let Cylinder::Coset { rep, .. } = c.windows[0] else { panic!() };
        assert_eq!(c.exits.len(), 1);
        let Cylinder::Coset { rep: next, .. } = t.columns[c.exits[0]].windows[0] else { panic!() };
        assert_eq!(next[0], (rep[0] + 4).rem_euclid(16));
    }
    let c = collapse(&t).unwrap();
    assert_eq!((c.simplified.vertex_count, c.simplified.edges.len()), (1, 1));
    assert_eq!(c.simplified.edges[0].length, Q::from_integer(16));
}

#[test]
fn dyadic_self_similar_circles() {
    let d = System::dyadic();
    let h = build_hierarchy(&d, 4, None, Schedule::SelfSimilar).unwrap();
    for l in &h.levels {
        let t = build_tower(l).unwrap();
        let c = collapse(&t).unwrap();
        assert_eq!(t.columns.len(), 1);
        assert_eq!(c.raw.edges.len(), 1 << l.level);
        assert_eq!(c.raw.vertex_count, 1 << l.level);
        assert_eq!((c.simplified.vertex_count, c.simplified.edges.len()), (1, 1));
        assert_eq!(c.store.classes().len(), c.raw.vertex_count);
    }
}

#[test]
fn whole_space_single_return() {
    let d = System::dyadic();
    let h = build_hierarchy(&d, 1, Some(&ClopenSet::whole(&d)), Schedule::Cylinder).unwrap();
    let t = build_tower(&h.levels[0]).unwrap();
    assert_eq!(t.heights(), BTreeSet::from([1]));
}

#[test]
fn simplify_circle() {
    let g = Graph { vertex_count: 4, edges: (0..4).map(|i| unit_edge(i, (i + 1) % 4)).collect() };
    let (s, chains, _) = simplify(&g);
    assert_eq!(s.vertex_count, 1);
    assert_eq!(s.edges.len(), 1);
    assert_eq!(s.edges[0].length, Q::from_integer(4));
    assert_eq!(chains[0].len(), 4);
    let (again, _, _) = simplify(&s);
    assert_eq!(again, s);
}

#[test]
fn simplify_single_loop() {
    let g = Graph { vertex_count: 1, edges: vec![unit_edge(0, 0)] };
    assert_eq!(simplify(&g).0, g);
}

#[test]
fn marked_vertices_survive() {
    let g = Graph { vertex_count: 4, edges: (0..4).map(|i| unit_edge(i, (i + 1) % 4)).collect() };
    let (s, _, kept) = simplify_marked(&g, &[true, false, true, false]);
    assert_eq!(s.vertex_count, 2);
    assert!(kept[0].is_some() && kept[2].is_some());
    assert_eq!(s.edges.iter().map(|e| e.length).collect::<Vec<_>>(), vec![Q::from_integer(2); 2]);
}

#[test]
fn closure_examples() {
    let st = equivalence_closure(4, &[(0, 1)]);
    assert_eq!(st.classes(), vec![vec![0, 1], vec![2], vec![3]]);
    let st = equivalence_closure(3, &[]);
    assert_eq!(st.classes().len(), 3);
}

#[test]
fn towers_on_cylinder_hierarchies() {
    for sys in [System::dyadic(), System::fibonacci(), System::thue_morse()] {
        let h = build_hierarchy(&sys, 3, None, Schedule::Cylinder).unwrap();
        let mut prev = None;
        for l in &h.levels {
            let t = build_tower(l).unwrap();
            t.covering(l, 4 * l.constants.max_return).unwrap();
            let c = collapse(&t).unwrap();
            assert!(c.simplified.is_connected());
            assert_eq!(c.raw.euler_characteristic(), c.simplified.euler_characteristic());
            let d = class_diameters(&t, &c).max();
            assert!(d <= l.constants.delta_hat, "{} level {}", sys.name, l.level);
            if let Some(p) = prev {
                assert!(d <= p);
            }
            prev = Some(d);
        }
    }
}

#[test]
fn square_tori() {
    let d2 = System::dyadic_2d();
    for k in 0..4 {
        let s = square_complex(&d2, k).unwrap();
        let n = d2.odometer().unwrap().lattice(k).index() as usize;
        assert_eq!(s.vertices.len(), n);
        assert_eq!(s.edges.len(), 2 * n);
        assert_eq!(s.faces.len(), n);
        assert_eq!(s.euler_characteristic(), 0);
    }
}

fn arb_graph() -> impl Strategy<Value = Graph> {
    (1usize..8).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n, 1i64..4), 1..16).prop_map(move |es| Graph {
            vertex_count: n,
            edges: es
                .into_iter()
                .map(|(a, b, l)| GraphEdge { from: a, to: b, symbol: "a".into(), length: Q::from_integer(l) })
                .collect(),
        })
    })
}

proptest! {
    #[test]
    fn simplify_preserves_euler_and_length(g in arb_graph()) {
        let (s, chains, _) = simplify(&g);
        prop_assert_eq!(g.euler_characteristic(), s.euler_characteristic());
        let total: Q = g.edges.iter().map(|e| e.length).sum();
        let after: Q = s.edges.iter().map(|e| e.length).sum();
        prop_assert_eq!(total, after);
        let mut all: Vec<usize> = chains.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..g.edges.len()).collect::<Vec<_>>());
        prop_assert_eq!(simplify(&s).0, s);
    }

    #[test]
    fn closure_classes_partition(n in 1usize..30, gens in proptest::collection::vec((0usize..30, 0usize..30), 0..40)) {
        let gens: Vec<(usize, usize)> = gens.into_iter().filter(|&(a, b)| a < n && b < n).collect();
        let st = equivalence_closure(n, &gens);
        let classes = st.classes();
        let mut all: Vec<usize> = classes.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        for (a, b) in gens {
            prop_assert_eq!(st.find(a), st.find(b));
        }
    }
}
