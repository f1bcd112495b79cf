//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.
//!
//!     cargo test -p netiqc --test acceptance

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use netiqc::certify::{certify_problem, evaluate_point, CertifyOptions, LinkLocality, PointMargin, Tolerances};
use netiqc::grid::{FrequencyGrid, GridSpec};
use netiqc::instances::{random_graph, random_hermitian, random_instance};
use netiqc::linalg::{self, int_to_complex, CMatrix, IMatrix};
use netiqc::lti::{nominal_stability_check, AgentModel, NominalLoop};
use netiqc::multipliers::{assemble_xi, split_xi3};
use netiqc::netgraph::{routing_entry, NetworkGraph, StructureMatrices};
use netiqc::oracle::{destabilization_search, direct_iqc_matrix, search_problem, SearchOptions};
use netiqc::{load_spec, Execution, Problem};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

const FIXTURES: &[&str] = &[
    "two_agent_certified.toml",
    "two_agent_large_radius.toml",
    "two_agent_unstable.toml",
    "matching.toml",
    "static_triangle.toml",
    "triangle.toml",
    "four_agent_star.toml",
];

fn pair(k: f64, r: f64) -> Problem {
    let g = NetworkGraph::new(2, &[(0, 1)]).unwrap();
    let agents = vec![AgentModel::first_order(k, 1.0, 1).unwrap(); 2];
    Problem::with_gain_bounded_links(g, agents, r).unwrap()
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Every structural identity, computed here from the raw matrices.
fn structure_identities(g: &NetworkGraph, s: &StructureMatrices) -> Result<(), String> {
    let dim = g.link_dim();
    let eye = IMatrix::identity(dim, dim);
    let offsets = g.offsets();
    for (i, &offset) in offsets.iter().enumerate() {
        for k in 0..g.degree(i) {
            for r in 0..dim {
                let e = routing_entry(g, i, k, r).map_err(|e| e.to_string())?;
                check(i64::from(e) == s.p[(offset + k, r)], || {
                    format!("P({}, {r}) disagrees with routing formula", offset + k)
                })?;
            }
        }
    }
    check(s.p.transpose() == s.p, || "P != P'".into())?;
    check(&s.p * &s.p == eye, || "P != P^-1".into())?;
    let sum_lk = s.lk.iter().fold(IMatrix::zeros(dim, dim), |a, x| a + x);
    check(s.p == &eye - &sum_lk, || "P != I - Σ L_k".into())?;
    check(&s.b * s.b.transpose() == s.l, || "L != B B'".into())?;
    let mut sum_bhat = IMatrix::zeros(dim, dim);
    for k in 0..g.edge_count() {
        check(&s.bhat[k] * &s.lk[k] == s.lk[k], || format!("B̂_{k} L_{k} != L_{k}"))?;
        for l in 0..g.edge_count() {
            if k != l {
                // All three factors are diagonal, so the product is the
                // elementwise product of the diagonals with d = (1, 2, ...).
                let clash = (0..dim).any(|q| s.bhat[k][(q, q)] * (q as i64 + 1) * s.bhat[l][(q, q)] != 0);
                check(!clash, || format!("B̂_{k} diag(d) B̂_{l} != 0"))?;
            }
        }
        sum_bhat += &s.bhat[k];
    }
    check(sum_bhat == eye, || "Σ B̂_k != I".into())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in 0..200 {
        let n = rng.random_range(2..=8);
        let density = rng.random_range(0.1..0.9);
        let g = random_graph(&mut rng, n, density);
        let s = StructureMatrices::build(&g).map_err(|e| e.to_string())?;
        structure_identities(&g, &s).map_err(|e| format!("graph {t} ({:?}): {e}", g.edges()))?;
        s.verify().map_err(|e| format!("graph {t}: builder self-check: {e}"))?;
    }
    within(Duration::from_secs(5), start)?;
    Ok(format!("200 graphs, n <= 8, {:.2?}", start.elapsed()))
}

fn criterion_2() -> Outcome {
    let g = NetworkGraph::new(2, &[(0, 1)]).unwrap();
    let s = StructureMatrices::build(&g).unwrap();
    let ks = [-1.5, -1.0, -0.999, -0.5, 0.0, 0.3, 0.5, 0.999, 1.0, 1.001, 1.5, 3.0];
    for k in ks {
        let agents = vec![AgentModel::first_order(k, 1.0, 1).unwrap(); 2];
        let nl = NominalLoop::assemble(&g, &s, &agents).map_err(|e| e.to_string())?;
        let stable = nominal_stability_check(&nl, Tolerances::default().stability_margin).is_stable();
        check(stable == (k.abs() < 1.0), || {
            format!("k = {k}: verdict stable = {stable}")
        })?;
        let mut eig: Vec<Complex64> = nl.eigenvalues();
        eig.sort_by(|a, b| a.re.total_cmp(&b.re));
        let expect = [-1.0 - k.abs(), -1.0 + k.abs()];
        for (z, e) in eig.iter().zip(expect) {
            check((z.re - e).abs() <= 1e-10 && z.im.abs() <= 1e-10, || {
                format!("k = {k}: eigenvalue {z} expected {e}")
            })?;
        }
    }
    Ok(format!("{} gains, eigenvalues -1 ± k within 1e-10", ks.len()))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let grid = GridSpec::default().build().unwrap();
    let opts = CertifyOptions::default();
    let certified = |k: f64, r: f64| -> Result<bool, String> {
        certify_problem(&pair(k, r), &grid, &opts)
            .map(|rep| rep.is_certified())
            .map_err(|e| e.to_string())
    };
    check(certified(0.5, 0.2)?, || "k = 0.5, r = 0.2 not certified".into())?;
    let (mut safe_certified, mut safe_total, mut unsafe_total) = (0, 0, 0);
    for a in 0..20 {
        for b in 0..20 {
            let k = 0.05 + (1.2 - 0.05) * a as f64 / 19.0;
            let r = 1.5 * b as f64 / 19.0;
            let c = certified(k, r)?;
            if k * k * (1.0 + r) * (1.0 + r) >= 1.0 {
                unsafe_total += 1;
                check(!c, || format!("certified k = {k}, r = {r} beyond the true boundary"))?;
            } else {
                safe_total += 1;
                safe_certified += usize::from(c);
            }
        }
    }
    let found = destabilization_search(
        &pair(0.9, 0.3),
        &[0.3, 0.3],
        &SearchOptions {
            samples: 50,
            seed: 3,
            ..SearchOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    check(found.is_found(), || "no witness for k = 0.9, r = 0.3".into())?;
    within(Duration::from_secs(60), start)?;
    Ok(format!(
        "(a) ok, (b) 0/{unsafe_total} unsafe certified, {safe_certified}/{safe_total} safe certified, (c) witness found, {:.2?}",
        start.elapsed()
    ))
}

fn coarse_grid() -> FrequencyGrid {
    GridSpec {
        points: 60,
        ..GridSpec::default()
    }
    .build()
    .unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = coarse_grid();
    let tol = Tolerances::default();
    let (mut all_positive, mut pointwise_checks) = (0, 0);
    for t in 0..100 {
        let inst = random_instance(&mut rng, 6);
        let p = Problem::new(inst.graph, inst.agents, inst.multipliers, 1e-9).map_err(|e| e.to_string())?;
        let locs: Vec<_> = (0..p.graph.edge_count())
            .map(|k| LinkLocality::new(&p, k).unwrap())
            .collect();
        let l = int_to_complex(&p.structure.l);
        let mut min_link = f64::INFINITY;
        let mut min_global = f64::INFINITY;
        for &w in grid.points() {
            let ev = evaluate_point(&p, &locs, w, &tol, true).map_err(|e| e.to_string())?;
            let eps_w = ev.links.iter().map(PointMargin::value).fold(f64::INFINITY, f64::min);
            let xi = assemble_xi(&p.graph, &p.agents, &p.multipliers, w).map_err(|e| e.to_string())?;
            let t_mat = &xi.xi1 + &xi.xi2 * &l + &l * xi.xi2.adjoint() + &l * &xi.xi3 * &l;
            let global = -linalg::max_eigenvalue(&linalg::hermitian_part(&t_mat));
            if eps_w.is_finite() {
                pointwise_checks += 1;
                check(global >= eps_w - 1e-8, || {
                    format!("instance {t}, ω = {w}: global {global} < link minimum {eps_w}")
                })?;
            }
            min_link = min_link.min(eps_w);
            min_global = min_global.min(global);
        }
        if min_link > 0.0 {
            all_positive += 1;
            check(min_global >= min_link - 1e-8, || {
                format!("instance {t}: global {min_global} < {min_link}")
            })?;
        }
    }
    check(all_positive > 0, || {
        "vacuous: no instance had all link margins positive".into()
    })?;
    Ok(format!(
        "100 instances, {all_positive} with all ε_k* > 0, {pointwise_checks} pointwise checks, 0 violations"
    ))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = coarse_grid();
    let (mut compared, mut ambiguous, mut singular) = (0, 0, 0);
    for t in 0..100 {
        let inst = random_instance(&mut rng, 6);
        let p = Problem::new(inst.graph, inst.agents, inst.multipliers, 1e-9).map_err(|e| e.to_string())?;
        let l = int_to_complex(&p.structure.l);
        for &w in grid.points() {
            let q = match direct_iqc_matrix(&p, w) {
                Ok(q) => q,
                Err(netiqc::Error::IllConditioned { .. }) => {
                    singular += 1;
                    continue;
                }
                Err(e) => return Err(e.to_string()),
            };
            let xi = assemble_xi(&p.graph, &p.agents, &p.multipliers, w).map_err(|e| e.to_string())?;
            let t_mat = netiqc::certify::global_matrix(&xi, &l);
            let (a, b) = (linalg::max_eigenvalue(&q), linalg::max_eigenvalue(&t_mat));
            if a.abs() <= 1e-9 || b.abs() <= 1e-9 {
                ambiguous += 1;
                continue;
            }
            compared += 1;
            check(a.signum() == b.signum(), || {
                format!("instance {t}, ω = {w}: λ_max signs {a} vs {b}")
            })?;
        }
    }
    Ok(format!(
        "{compared} frequency points agree, {ambiguous} within 1e-9 of zero, {singular} singular M"
    ))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for t in 0..500 {
        let m = rng.random_range(1..=6);
        let x = random_hermitian(&mut rng, m).scale(rng.random_range(0.1..10.0));
        let s = split_xi3(&x);
        let d = CMatrix::from_diagonal(&s.d.map(|v| Complex64::new(v, 0.0)));
        let rel = linalg::frobenius(&(&d + &s.e - &x)) / linalg::frobenius(&x).max(f64::MIN_POSITIVE);
        check(rel <= 1e-10, || format!("input {t}: reconstruction error {rel:e}"))?;
        let top = linalg::max_eigenvalue(&s.e);
        check(top <= 1e-10, || format!("input {t}: λ_max(E) = {top:e}"))?;
    }
    for t in 0..100 {
        let m = rng.random_range(1..=6);
        let x = CMatrix::from_fn(m, m, |i, j| {
            if i == j {
                Complex64::new(rng.random_range(-3.0..3.0), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let s = split_xi3(&x);
        check(s.e.iter().all(|z| *z == Complex64::new(0.0, 0.0)), || {
            format!("diagonal input {t}: E != 0")
        })?;
    }
    Ok("500 Hermitian + 100 diagonal inputs".into())
}

fn criterion_7() -> Outcome {
    let tol = Tolerances::default();
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    for name in FIXTURES {
        let spec = load_spec(fixture(name)).map_err(|e| format!("{name}: {e}"))?;
        let p = spec.to_problem().map_err(|e| e.to_string())?;
        let locs: Vec<_> = (0..p.graph.edge_count())
            .map(|k| LinkLocality::new(&p, k).unwrap())
            .collect();
        for &w in spec.frequency_grid().map_err(|e| e.to_string())?.points() {
            let a = evaluate_point(&p, &locs, w, &tol, true).map_err(|e| e.to_string())?;
            let b = evaluate_point(&p, &locs, w, &tol, false).map_err(|e| e.to_string())?;
            for (k, (x, y)) in a.links.iter().zip(&b.links).enumerate() {
                let (x, y) = (x.value(), y.value());
                let same = (x == f64::NEG_INFINITY && y == f64::NEG_INFINITY) || (x - y).abs() <= 1e-9;
                check(same, || {
                    format!("{name}, link {}, ω = {w}: reduced {x} vs full {y}", k + 1)
                })?;
                if x.is_finite() {
                    worst = worst.max((x - y).abs());
                }
                compared += 1;
            }
        }
        if *name == "four_agent_star.toml" {
            check(locs[0].dim() == 4 && p.structure.link_dim() == 8, || {
                "edge {1,2}: expected reduced 4, full 8".into()
            })?;
        }
    }
    Ok(format!(
        "{} fixtures, {compared} link/frequency pairs, max finite gap {worst:.1e}",
        FIXTURES.len()
    ))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut certified = Vec::new();
    for name in FIXTURES {
        let spec = load_spec(fixture(name)).map_err(|e| e.to_string())?;
        let p = spec.to_problem().map_err(|e| e.to_string())?;
        let opts = CertifyOptions {
            tolerances: spec.tolerances.clone(),
            execution: Execution::Parallel,
            ..CertifyOptions::default()
        };
        let report = certify_problem(&p, &spec.frequency_grid().unwrap(), &opts).map_err(|e| e.to_string())?;
        if !report.is_certified() {
            continue;
        }
        let out = search_problem(
            &p,
            &SearchOptions {
                samples: 500,
                seed: 2024,
                ..SearchOptions::default()
            },
        )
        .map_err(|e| e.to_string())?;
        check(!out.is_found(), || {
            format!("{name}: certified but a destabilizing sample was found: {out:?}")
        })?;
        certified.push(name.trim_end_matches(".toml"));
    }
    check(!certified.is_empty(), || "no certified fixture".into())?;
    within(Duration::from_secs(120), start)?;
    Ok(format!(
        "none found on {} ({:.2?})",
        certified.join(", "),
        start.elapsed()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("structure exactness", criterion_1),
        ("nominal stability anchor", criterion_2),
        ("robust margin anchor", criterion_3),
        ("decentralized implies global", criterion_4),
        ("congruence equivalence", criterion_5),
        ("splitting lemma", criterion_6),
        ("reduced equals full", criterion_7),
        ("soundness regression", criterion_8),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
