//! Acceptance criteria, one PASS/FAIL line each. Runs without the test harness so the lines
//! always reach stdout.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use matchbox::clopen::ClopenSet;
use matchbox::coding::{build_hierarchy, check_level, check_level_clopen, word_level, Schedule};
use matchbox::delone::{net, stats};
use matchbox::invlim::{bonding, compose_check, render_poly, thread_check, InverseSystem, TransitionMatrix};
use matchbox::report::{self, lambda_growth, RunConfig};
use matchbox::systems::{System, SystemRef};
use matchbox::tower::build_tower;
use matchbox::voronoi::{cells, check_cell_bounds, halfspace_form, oracle_mismatches, tessellation_defect, SiteNet};
use matchbox::Q;
use num_bigint::BigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn within(t: Duration, limit_s: u64) -> Result<(), String> {
    ensure(t < Duration::from_secs(limit_s), format!("took {:.2}s, limit {limit_s}s", t.as_secs_f64()))
}

fn inverse(sys: &SystemRef, levels: usize, schedule: Schedule) -> Result<InverseSystem, String> {
    let h = build_hierarchy(sys, levels, None, schedule).map_err(|e| e.to_string())?;
    InverseSystem::build(h).map_err(|e| e.to_string())
}

fn all_triples(s: &InverseSystem) -> Result<usize, String> {
    let n = s.depth();
    let mut count = 0;
    for a in 1..=n {
        for b in a + 1..=n {
            for c in b + 1..=n {
                let q = |x, y| bonding(s, x, y).map_err(|e| e.to_string());
                let (q31, q21, q32) = (q(c, a)?, q(b, a)?, q(c, b)?);
                ensure(compose_check(&q31, &q21, &q32).map_err(|e| e.to_string())?, format!("factorization {c}>{b}>{a}"))?;
                ensure(q21.matrix.mul(&q32.matrix).map_err(|e| e.to_string())? == q31.matrix, "matrix functoriality")?;
                count += 1;
            }
        }
    }
    Ok(count)
}

fn dyadic_solenoid() -> Outcome {
    let t = Instant::now();
    let s = inverse(&System::dyadic(), 6, Schedule::SelfSimilar)?;
    for c in &s.complexes {
        ensure(c.simplified.vertex_count == 1 && c.simplified.edges.len() == 1, format!("level {} is not a circle", c.level))?;
    }
    let ms = s.matrices().map_err(|e| e.to_string())?;
    ensure(ms.iter().all(|m| *m == TransitionMatrix::from_rows(vec![vec![2]])), "a bonding matrix differs from [2]")?;
    let (h, _) = s.h1().map_err(|e| e.to_string())?;
    ensure(h.rank == 1, format!("rank {}", h.rank))?;
    let triples = all_triples(&s)?;
    let el = t.elapsed();
    within(el, 5)?;
    Ok(format!("6 circles, {} matrices [2], rank 1, {triples} triples, {:.2}s", ms.len(), el.as_secs_f64()))
}

fn fibonacci_towers() -> Outcome {
    let t = Instant::now();
    let fib = System::fibonacci();
    let level = word_level(&fib, "aa", 1 << 12).map_err(|e| e.to_string())?;
    let heights = build_tower(&level).map_err(|e| e.to_string())?.heights();
    ensure(heights == [3, 5].into(), format!("[aa] heights {heights:?}"))?;
    let s = inverse(&fib, 6, Schedule::SelfSimilar)?;
    let (h, _) = s.h1().map_err(|e| e.to_string())?;
    let want: Vec<BigInt> = [1, -1, -1].into_iter().map(BigInt::from).collect();
    let got = h.charpoly.as_deref().map(render_poly).unwrap_or_else(|| "none".into());
    ensure(h.charpoly.as_ref() == Some(&want), format!("charpoly {got}"))?;
    ensure(h.rank == 2, format!("rank {}", h.rank))?;
    let el = t.elapsed();
    within(el, 10)?;
    Ok(format!("heights {{3, 5}}, charpoly {got}, rank 2, {:.2}s", el.as_secs_f64()))
}

fn coding_soundness() -> Outcome {
    let mut blocks = 0;
    let mut germs = 0;
    for sys in [System::dyadic(), System::fibonacci(), System::thue_morse()] {
        let h = build_hierarchy(&sys, 3, None, Schedule::Cylinder).map_err(|e| e.to_string())?;
        for l in &h.levels {
            let r = check_level(l);
            ensure(r.ok(), format!("{} level {}: {}", sys.name, l.level, r.failures.join("; ")))?;
            ensure(r.diameter_violations.is_empty(), format!("{} level {}: W diameter", sys.name, l.level))?;
            if l.depths.fine <= report::CLOPEN_CHECK_DEPTH {
                let c = check_level_clopen(l).map_err(|e| e.to_string())?;
                ensure(c.ok(), format!("{} level {} (clopen): {}", sys.name, l.level, c.failures.join("; ")))?;
            }
            blocks += r.blocks_checked;
            germs += r.germ_checks;
        }
    }
    Ok(format!("{blocks} blocks, {germs} germ checks, 0 failures"))
}

fn voronoi_oracle() -> Outcome {
    let t = Instant::now();
    let zero = num_rational::BigRational::from_integer(0.into());
    for n in [SiteNet::lattice(1, 5), SiteNet::lattice(2, 3)] {
        let cs = cells(&n).map_err(|e| e.to_string())?;
        for c in cs.iter().filter(|c| c.unclipped) {
            ensure(halfspace_form(&n, c.site).map_err(|e| e.to_string())? == c.geometry, "lattice half-space form")?;
        }
        ensure(tessellation_defect(&n).map_err(|e| e.to_string())? == zero, "lattice tessellation")?;
    }
    let d = System::dyadic();
    let four = ClopenSet::coset(&d, [0, 0], 2).map_err(|e| e.to_string())?;
    let dn = net(&d.basepoint(), &four, Q::from_integer(40)).map_err(|e| e.to_string())?;
    let st = stats(&dn, 16).map_err(|e| e.to_string())?;
    let rep = check_cell_bounds(&SiteNet::from_delone(&dn).map_err(|e| e.to_string())?, &st).map_err(|e| e.to_string())?;
    ensure(rep.ok() && rep.checked > 0, format!("4ℤ bounds: {:?}", rep.failures))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut mismatches = 0;
    let nets = 100;
    for k in 0..nets {
        let n = SiteNet::random(&mut rng, 1 + k % 2, 20);
        mismatches += oracle_mismatches(&n, 20).map_err(|e| e.to_string())?;
        ensure(tessellation_defect(&n).map_err(|e| e.to_string())? == zero, format!("net {k} tessellation"))?;
        for c in cells(&n).map_err(|e| e.to_string())?.iter().filter(|c| c.unclipped) {
            ensure(halfspace_form(&n, c.site).map_err(|e| e.to_string())? == c.geometry, format!("net {k} half-space form"))?;
        }
    }
    ensure(mismatches == 0, format!("{mismatches} oracle mismatches"))?;
    let el = t.elapsed();
    within(el, 30)?;
    Ok(format!("lattices + {nets} random nets, 0 mismatches, {:.2}s", el.as_secs_f64()))
}

fn lambda_growth_all() -> Outcome {
    let mut profiles = Vec::new();
    for sys in [System::dyadic(), System::fibonacci(), System::thue_morse(), System::dyadic_2d()] {
        let h = build_hierarchy(&sys, 3, None, Schedule::Cylinder).map_err(|e| e.to_string())?;
        let (monotone, separated) = lambda_growth(&h);
        let prof: Vec<String> = h.lambda1_profile().iter().map(|q| q.to_string()).collect();
        ensure(monotone, format!("{} profile {prof:?} not growing", sys.name))?;
        ensure(separated, format!("{} λ₁ ≤ previous R", sys.name))?;
        profiles.push(format!("{} [{}]", sys.name, prof.join(", ")));
    }
    Ok(profiles.join("; "))
}

fn threads() -> Outcome {
    let t = Instant::now();
    let mut parts = Vec::new();
    for sys in [System::dyadic(), System::fibonacci(), System::thue_morse()] {
        let s = inverse(&sys, 3, Schedule::Cylinder)?;
        let r = thread_check(&s, 100, 0).map_err(|e| e.to_string())?;
        ensure(r.pairs_tested == 100, format!("{}: {} pairs", sys.name, r.pairs_tested))?;
        ensure(r.injectivity_ok(), format!("{}: injectivity", sys.name))?;
        ensure(r.surjectivity_ok(), format!("{}: surjectivity", sys.name))?;
        ensure(r.diameters_ok(), format!("{}: class diameters", sys.name))?;
        let mode = if r.exhaustive { "exhaustive" } else { "sampled" };
        parts.push(format!("{} {}/{} threads {mode}", sys.name, r.threads_checked, r.thread_count));
    }
    let el = t.elapsed();
    within(el, 30)?;
    Ok(format!("{}, {:.2}s", parts.join(", "), el.as_secs_f64()))
}

fn determinism() -> Outcome {
    let mut count = 0;
    for sys in [System::dyadic(), System::fibonacci(), System::dyadic_2d()] {
        let cfg = RunConfig { seed: 11, ..RunConfig::default() };
        let a = report::build(&sys, &cfg).map_err(|e| e.to_string())?;
        let b = report::build(&sys, &cfg).map_err(|e| e.to_string())?;
        ensure(a.artifacts == b.artifacts, format!("{} artifacts differ", sys.name))?;
        count += a.artifacts.len();
    }
    Ok(format!("{count} artifacts identical across two builds"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("dyadic solenoid reconstruction", dyadic_solenoid),
        ("fibonacci towers", fibonacci_towers),
        ("coding soundness", coding_soundness),
        ("voronoi oracle", voronoi_oracle),
        ("lambda1 growth", lambda_growth_all),
        ("inverse-limit threads", threads),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
