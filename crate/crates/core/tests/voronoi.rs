use matchbox::clopen::ClopenSet;
use matchbox::delone::{net, stats};
use matchbox::systems::System;
use matchbox::voronoi::*;
use matchbox::Q;
use num_bigint::BigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn r(p: i64, q: i64) -> R {
    R::new(BigInt::from(p), BigInt::from(q))
}

fn q(n: i64) -> Q {
    Q::from_integer(n)
}

#[test]
fn integer_line() {
    let n = SiteNet::lattice(1, 5);
    let i0 = n.index_of(&[r(0, 1), r(0, 1)]).unwrap();
    let cs = cells(&n).unwrap();
    assert_eq!(cs[i0].geometry, Geometry::Interval(r(-1, 2), r(1, 2)));
    let st = star(&n, i0).unwrap();
    assert_eq!(st.vertex_set, vec![i0 - 1, i0, i0 + 1]);
    assert_eq!(halfspace_form(&n, i0).unwrap(), cs[i0].geometry);
}

#[test]
fn small_line_net() {
    let n = SiteNet::line(&[q(0), q(1), q(3)], q(-2), q(5)).unwrap();
    let cs = cells(&n).unwrap();
    assert_eq!(cs[1].geometry, Geometry::Interval(r(1, 2), r(2, 1)));
    let st = star(&SiteNet::line(&[q(-1), q(0), q(1), q(3), q(4)], q(-2), q(6)).unwrap(), 1).unwrap();
    assert_eq!(st.vertex_set, vec![0, 1, 2]);
    let n = SiteNet::line(&[q(-2), q(0), q(1), q(3), q(5)], q(-3), q(6)).unwrap();
    assert_eq!(star(&n, 1).unwrap().vertex_set, vec![0, 1, 2]);
}

#[test]
fn integer_plane() {
    let n = SiteNet::lattice(2, 3);
    let o = n.index_of(&[r(0, 1), r(0, 1)]).unwrap();
    let cs = cells(&n).unwrap();
    let sq = vec![
        [r(-1, 2), r(-1, 2)],
        [r(1, 2), r(-1, 2)],
        [r(1, 2), r(1, 2)],
        [r(-1, 2), r(1, 2)],
    ];
    assert_eq!(cs[o].geometry, Geometry::Polygon(sq));
    let st = star(&n, o).unwrap();
    assert_eq!(st.vertex_set.len(), 9);
    assert_eq!(halfspace_form(&n, o).unwrap(), cs[o].geometry);
    let hull = convex_hull(st.cells.iter().flat_map(|g| g.vertices()).collect());
    assert_eq!(hull[0], [r(-3, 2), r(-3, 2)]);
    assert_eq!(hull[2], [r(3, 2), r(3, 2)]);
    assert_eq!(tessellation_defect(&n).unwrap(), r(0, 1));
}

#[test]
fn dyadic_bounds() {
    let d = System::dyadic();
    let c = ClopenSet::coset(&d, [0, 0], 2).unwrap();
    let dn = net(&d.basepoint(), &c, q(40)).unwrap();
    let st = stats(&dn, 16).unwrap();
    let sn = SiteNet::from_delone(&dn).unwrap();
    let rep = check_cell_bounds(&sn, &st).unwrap();
    assert!(rep.ok(), "{:?}", rep.failures);
    assert!(rep.checked > 0);
    let (_, d2, b) = &rep.diameter_margins[0];
    assert_eq!((d2.clone(), b.clone()), (r(16, 1), r(196, 1)));
}

#[test]
fn random_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for t in 0..20 {
        let dim = 1 + t % 2;
        let n = SiteNet::random(&mut rng, dim, 20);
        assert_eq!(oracle_mismatches(&n, 20).unwrap(), 0);
        assert_eq!(tessellation_defect(&n).unwrap(), r(0, 1));
        let cs = cells(&n).unwrap();
        for c in cs.iter().filter(|c| c.unclipped) {
            assert_eq!(halfspace_form(&n, c.site).unwrap(), c.geometry);
        }
    }
}
