//! Pipeline runs shared by the `mbf` binary and the tests: artifacts, the summary document and
//! the check suites.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::clopen::ClopenSet;
use crate::coding::{build_hierarchy_with, check_level, check_level_clopen, CodingHierarchy, Schedule};
use crate::delone::{net, stats};
use crate::invlim::{
    bonding, compose_check, render_poly, square_bonding, square_compose_check, thread_check, InverseSystem,
};
use crate::systems::SystemRef;
use crate::tower::square_complex;
use crate::voronoi::{cells, check_cell_bounds, halfspace_form, oracle_mismatches, tessellation_defect, SiteNet};
use crate::{Error, Result, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Emit {
    Dot,
    Json,
    Csv,
}

impl FromStr for Emit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Emit::Dot),
            "json" => Ok(Emit::Json),
            "csv" => Ok(Emit::Csv),
            _ => Err(Error::MalformedSpec(format!("unknown emit format {s}"))),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cylinder" => Ok(Schedule::Cylinder),
            "self-similar" => Ok(Schedule::SelfSimilar),
            _ => Err(Error::MalformedSpec(format!("unknown schedule {s}"))),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Cylinder => "cylinder",
            Schedule::SelfSimilar => "self-similar",
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub levels: usize,
    pub scan_depth: usize,
    pub schedule: Schedule,
    pub emit: BTreeSet<Emit>,
    pub seed: u64,
    /// Point pairs for the injectivity proxy.
    pub samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            levels: 3,
            scan_depth: crate::coding::DEFAULT_SCAN_DEPTH,
            schedule: Schedule::Cylinder,
            emit: [Emit::Dot, Emit::Json, Emit::Csv].into_iter().collect(),
            seed: 0,
            samples: 100,
        }
    }
}

/// A named output file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug)]
pub struct BuildOutput {
    pub summary: Value,
    pub artifacts: Vec<Artifact>,
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialise");
    s.push('\n');
    s
}

fn level_summary(h: &CodingHierarchy) -> Vec<Value> {
    h.levels
        .iter()
        .map(|l| {
            let c = &l.constants;
            let rep = check_level(l);
            json!({
                "level": l.level,
                "depths": {"v": l.depths.v, "w": l.depths.w, "code": l.depths.code, "fine": l.depths.fine},
                "eps": c.eps.to_string(),
                "alpha": c.alpha,
                "theta": c.theta.to_string(),
                "r_prime": c.r_prime.to_string(),
                "r": c.r.to_string(),
                "delta_hat": c.delta_hat.to_string(),
                "lambda1": c.lambda1.to_string(),
                "max_return": c.max_return,
                "w_blocks": l.w_blocks.len(),
                "code_blocks": l.code_blocks.len(),
                "fine_blocks": l.fine_blocks.len(),
                "coding_failures": rep.failures.len(),
                "diameter_violations": rep.diameter_violations.len(),
            })
        })
        .collect()
}

/// λ₁ nondecreasing with a strict increase, and λ₁(ℓ) > R_{ℓ−1}.
pub fn lambda_growth(h: &CodingHierarchy) -> (bool, bool) {
    let prof = h.lambda1_profile();
    let monotone = prof.windows(2).all(|w| w[0] <= w[1]) && prof.windows(2).any(|w| w[0] < w[1]);
    let separated = h.levels.windows(2).all(|w| w[1].constants.lambda1 > w[0].constants.r);
    (monotone, separated)
}

/// Runs the pipeline to the configured depth and renders every artifact in memory.
pub fn build(sys: &SystemRef, cfg: &RunConfig) -> Result<BuildOutput> {
    if cfg.levels == 0 {
        return Err(Error::MalformedSpec("levels must be at least 1".into()));
    }
    let hier = build_hierarchy_with(sys, cfg.levels, None, cfg.schedule, cfg.scan_depth)?;
    let mut artifacts = vec![Artifact { name: "hierarchy.txt".into(), contents: hier.dump() }];
    let levels = level_summary(&hier);
    let (monotone, separated) = lambda_growth(&hier);
    let mut summary = json!({
        "system": sys.name,
        "dim": sys.dim(),
        "levels": cfg.levels,
        "schedule": cfg.schedule.to_string(),
        "seed": cfg.seed,
        "hierarchy": levels,
        "lambda1": {"nondecreasing_with_increase": monotone, "exceeds_previous_r": separated},
    });
    if sys.dim() == 2 {
        let squares = hier
            .levels
            .iter()
            .map(|l| square_complex(sys, l.depths.v))
            .collect::<Result<Vec<_>>>()?;
        let mut sq = Vec::new();
        for (i, s) in squares.iter().enumerate() {
            if cfg.emit.contains(&Emit::Json) {
                artifacts.push(Artifact { name: format!("square-{}.json", i + 1), contents: pretty(&s.to_json()) });
            }
            sq.push(json!({"level": i + 1, "vertices": s.vertices.len(), "edges": s.edges.len(),
                "faces": s.faces.len(), "euler": s.euler_characteristic()}));
        }
        let mut composes = Vec::new();
        for a in 0..squares.len() {
            for b in a + 1..squares.len() {
                for c in b + 1..squares.len() {
                    let q31 = square_bonding(sys, &squares[c], &squares[a])?;
                    let q21 = square_bonding(sys, &squares[b], &squares[a])?;
                    let q32 = square_bonding(sys, &squares[c], &squares[b])?;
                    composes.push(json!({"levels": [c + 1, b + 1, a + 1], "ok": square_compose_check(&q31, &q21, &q32)?}));
                }
            }
        }
        summary["squares"] = json!(sq);
        summary["compose"] = json!(composes);
    } else {
        let inv = InverseSystem::build(hier)?;
        let mut complexes = Vec::new();
        for (i, (t, c)) in inv.towers.iter().zip(&inv.complexes).enumerate() {
            let l = i + 1;
            if cfg.emit.contains(&Emit::Json) {
                artifacts.push(Artifact { name: format!("tower-{l}.json"), contents: pretty(&t.to_json()) });
                artifacts.push(Artifact { name: format!("complex-{l}.json"), contents: pretty(&c.to_json()) });
            }
            if cfg.emit.contains(&Emit::Dot) {
                artifacts.push(Artifact { name: format!("complex-{l}.dot"), contents: c.simplified.to_dot(&format!("M{l}")) });
            }
            complexes.push(json!({
                "level": l,
                "columns": t.columns.len(),
                "heights": t.heights(),
                "cells": t.cell_count(),
                "raw": {"vertices": c.raw.vertex_count, "edges": c.raw.edges.len(), "euler": c.raw.euler_characteristic()},
                "simplified": {"vertices": c.simplified.vertex_count, "edges": c.simplified.edges.len(),
                    "euler": c.simplified.euler_characteristic(), "connected": c.simplified.is_connected()},
            }));
        }
        summary["complexes"] = json!(complexes);
        let bonds = inv.bondings()?;
        let mut mats = Vec::new();
        for b in &bonds {
            if cfg.emit.contains(&Emit::Csv) {
                artifacts.push(Artifact { name: format!("bonding-{}-{}.csv", b.source, b.target), contents: b.matrix.to_csv() });
            }
            mats.push(json!({"source": b.source, "target": b.target, "matrix": b.matrix.data, "vertex_matrix": b.vertex_matrix.data}));
        }
        summary["bondings"] = json!(mats);
        let mut composes = Vec::new();
        for a in 1..=inv.depth() {
            for b in a + 1..=inv.depth() {
                for c in b + 1..=inv.depth() {
                    let ok = compose_check(&bonding(&inv, c, a)?, &bonding(&inv, b, a)?, &bonding(&inv, c, b)?)?;
                    composes.push(json!({"levels": [c, b, a], "ok": ok}));
                }
            }
        }
        summary["compose"] = json!(composes);
        // The direct limit needs two bonding matrices.
        if inv.depth() >= 3 {
            let (h, step) = inv.h1()?;
            summary["h1"] = json!({
                "rank": h.rank,
                "tail_ranks": h.tail_ranks,
                "drift": h.drift,
                "charpoly": h.charpoly.as_ref().map(|c| render_poly(c)),
                "step": step.as_ref().map(|s| json!({"level": s.level, "power": s.power, "matrix": s.edges.data})),
            });
        }
        summary["threads"] = thread_check(&inv, cfg.samples, cfg.seed)?.to_json();
    }
    artifacts.push(Artifact { name: "summary.json".into(), contents: pretty(&summary) });
    Ok(BuildOutput { summary, artifacts })
}

/// Writes each artifact through a temporary file and a rename.
pub fn write_atomic(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        let tmp = dir.join(format!(".{}.tmp", a.name));
        std::fs::write(&tmp, &a.contents)?;
        std::fs::rename(&tmp, dir.join(&a.name))?;
    }
    Ok(())
}

/// Check suites run by `mbf check`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Partition,
    Coding,
    Voronoi,
    Tower,
    Bonding,
    Threads,
    Lambda,
}

impl Suite {
    pub const ALL: [Suite; 7] =
        [Suite::Partition, Suite::Coding, Suite::Voronoi, Suite::Tower, Suite::Bonding, Suite::Threads, Suite::Lambda];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Partition => "partition",
            Suite::Coding => "coding",
            Suite::Voronoi => "voronoi",
            Suite::Tower => "tower",
            Suite::Bonding => "bonding",
            Suite::Threads => "threads",
            Suite::Lambda => "lambda",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::MalformedSpec(format!("unknown suite {s}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuiteResult {
    pub suite: Suite,
    /// Name of the first violated invariant, if any.
    pub failure: Option<String>,
    pub detail: Value,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn to_json(&self) -> Value {
        json!({"suite": self.suite.name(), "passed": self.passed(), "failure": self.failure, "detail": self.detail})
    }
}

#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub run: RunConfig,
    pub suites: BTreeSet<Suite>,
    /// Random nets for the Voronoi suite.
    pub nets: usize,
    /// Feed a corrupted bonding map to the factorization check.
    pub corrupt: bool,
}

/// Levels whose fine depth stays below this are also checked through the clopen algebra.
pub const CLOPEN_CHECK_DEPTH: usize = 4096;

fn fail_if(cond: bool, name: &str) -> Option<String> {
    (!cond).then(|| name.to_string())
}

pub fn check(sys: &SystemRef, cfg: &CheckConfig) -> Result<Vec<SuiteResult>> {
    let run = &cfg.run;
    let hier = build_hierarchy_with(sys, run.levels, None, run.schedule, run.scan_depth)?;
    let mut out = Vec::new();
    let mut push = |suite: Suite, failure: Option<String>, detail: Value| {
        out.push(SuiteResult { suite, failure, detail })
    };
    if cfg.suites.contains(&Suite::Partition) {
        let mut checked = 0;
        let mut failures = 0;
        for l in hier.levels.iter().filter(|l| l.depths.fine <= CLOPEN_CHECK_DEPTH) {
            checked += 1;
            let rep = check_level_clopen(l)?;
            failures += rep.failures.len();
        }
        push(Suite::Partition, fail_if(failures == 0, "code_partition"), json!({"levels": checked, "failures": failures}));
    }
    if cfg.suites.contains(&Suite::Coding) {
        let reps: Vec<_> = hier.levels.iter().map(check_level).collect();
        let failures: usize = reps.iter().map(|r| r.failures.len()).sum();
        let diam: usize = reps.iter().map(|r| r.diameter_violations.len()).sum();
        let germs: usize = reps.iter().map(|r| r.germ_checks).sum();
        let failure = fail_if(failures == 0, "local_constancy").or(fail_if(diam == 0, "w_block_diameter"));
        push(Suite::Coding, failure, json!({"germ_checks": germs, "failures": failures, "diameter_violations": diam}));
    }
    if cfg.suites.contains(&Suite::Voronoi) {
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
        let mut mismatches = 0;
        let mut defects = 0;
        let mut halfspace = 0;
        for t in 0..cfg.nets {
            let n = SiteNet::random(&mut rng, 1 + t % 2, 20);
            mismatches += oracle_mismatches(&n, 20)?;
            if tessellation_defect(&n)? != num_rational::BigRational::from_integer(0.into()) {
                defects += 1;
            }
            for c in cells(&n)?.iter().filter(|c| c.unclipped) {
                if halfspace_form(&n, c.site)? != c.geometry {
                    halfspace += 1;
                }
            }
        }
        let l1 = &hier.levels[0];
        let v = ClopenSet::from_cylinders(sys, l1.v_windows.clone());
        // Interior cells need their star, of radius 3e_W, inside the window.
        let radius = if sys.dim() == 2 {
            Q::from_integer(4 * (2 * l1.constants.alpha as i64 + 1) + 2)
        } else {
            Q::from_integer(8 * l1.constants.max_return.max(4))
        };
        let dn = net(&sys.basepoint(), &v, radius)?;
        let bounds = check_cell_bounds(&SiteNet::from_delone(&dn)?, &stats(&dn, 16)?)?;
        let failure = fail_if(mismatches == 0, "nearest_site_oracle")
            .or(fail_if(defects == 0, "tessellation"))
            .or(fail_if(halfspace == 0, "halfspace_form"))
            .or(fail_if(bounds.ok(), "cell_bounds"));
        push(
            Suite::Voronoi,
            failure,
            json!({"nets": cfg.nets, "seed": run.seed, "mismatches": mismatches, "cells_bounded": bounds.checked}),
        );
    }
    let needs_inv = [Suite::Tower, Suite::Bonding, Suite::Threads].iter().any(|s| cfg.suites.contains(s));
    if sys.dim() == 2 && needs_inv {
        let squares = hier
            .levels
            .iter()
            .map(|l| square_complex(sys, l.depths.v))
            .collect::<Result<Vec<_>>>()?;
        if cfg.suites.contains(&Suite::Tower) {
            let torus = squares.iter().all(|s| s.euler_characteristic() == 0);
            let tiled = squares.iter().all(|s| s.faces.len() == s.vertices.len() && s.edges.len() == 2 * s.vertices.len());
            let failure = fail_if(torus, "euler_characteristic").or(fail_if(tiled, "covering"));
            push(Suite::Tower, failure, json!({"levels": squares.len()}));
        }
        if cfg.suites.contains(&Suite::Bonding) {
            let mut failure = None;
            let mut triples = 0;
            for a in 0..squares.len() {
                for b in a + 1..squares.len() {
                    for c in b + 1..squares.len() {
                        triples += 1;
                        let mut q31 = square_bonding(sys, &squares[c], &squares[a])?;
                        if cfg.corrupt {
                            q31.vertex_map[0] += 1;
                        }
                        let q21 = square_bonding(sys, &squares[b], &squares[a])?;
                        let q32 = square_bonding(sys, &squares[c], &squares[b])?;
                        if !square_compose_check(&q31, &q21, &q32)? {
                            failure = failure.or(Some("bonding_factorization".to_string()));
                        }
                    }
                }
            }
            push(Suite::Bonding, failure, json!({"triples": triples, "corrupted": cfg.corrupt}));
        }
    }
    if sys.dim() == 1 && needs_inv {
        let lambda_hier = cfg.suites.contains(&Suite::Lambda).then(|| lambda_growth(&hier));
        let inv = InverseSystem::build(hier)?;
        if cfg.suites.contains(&Suite::Tower) {
            let mut failure = None;
            for (i, (t, c)) in inv.towers.iter().zip(&inv.complexes).enumerate() {
                let lev = &inv.hierarchy.levels[i];
                if t.covering(lev, 4 * lev.constants.max_return).is_err() {
                    failure = failure.or(Some("covering".to_string()));
                }
                if c.raw.euler_characteristic() != c.simplified.euler_characteristic() {
                    failure = failure.or(Some("euler_characteristic".to_string()));
                }
                if !c.simplified.is_connected() {
                    failure = failure.or(Some("connected".to_string()));
                }
            }
            push(Suite::Tower, failure, json!({"levels": inv.depth()}));
        }
        if cfg.suites.contains(&Suite::Bonding) {
            let mut failure = None;
            let mut triples = 0;
            for a in 1..=inv.depth() {
                for b in a + 1..=inv.depth() {
                    for c in b + 1..=inv.depth() {
                        triples += 1;
                        let mut q31 = bonding(&inv, c, a)?;
                        if cfg.corrupt {
                            q31 = q31.corrupted();
                        }
                        let q21 = bonding(&inv, b, a)?;
                        let q32 = bonding(&inv, c, b)?;
                        if !compose_check(&q31, &q21, &q32)? {
                            failure = failure.or(Some("bonding_factorization".to_string()));
                        }
                        if q21.matrix.mul(&q32.matrix)? != q31.matrix {
                            failure = failure.or(Some("matrix_functoriality".to_string()));
                        }
                    }
                }
            }
            push(Suite::Bonding, failure, json!({"triples": triples, "corrupted": cfg.corrupt}));
        }
        if cfg.suites.contains(&Suite::Threads) {
            let r = thread_check(&inv, run.samples, run.seed)?;
            let failure = fail_if(r.injectivity_ok(), "injectivity_proxy")
                .or(fail_if(r.surjectivity_ok(), "surjectivity_proxy"))
                .or(fail_if(r.diameters_ok(), "class_diameter_decay"));
            push(Suite::Threads, failure, r.to_json());
        }
        if let Some((monotone, separated)) = lambda_hier {
            let failure = fail_if(monotone, "lambda1_growth").or(fail_if(separated, "lambda1_exceeds_r"));
            push(Suite::Lambda, failure, json!({"nondecreasing_with_increase": monotone, "exceeds_previous_r": separated}));
        }
    } else if cfg.suites.contains(&Suite::Lambda) {
        // Also reached for d = 2, where the tower suites above do not touch λ₁.
        let (monotone, separated) = lambda_growth(&hier);
        let failure = fail_if(monotone, "lambda1_growth").or(fail_if(separated, "lambda1_exceeds_r"));
        push(Suite::Lambda, failure, json!({"nondecreasing_with_increase": monotone, "exceeds_previous_r": separated}));
    }
    out.sort_by_key(|r| r.suite);
    Ok(out)
}
