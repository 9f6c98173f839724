//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Tolerances are fixed constants below.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use lpfix::bench::{run_sweep, SweepSpec};
use lpfix::centerpoint::{centerpoint_quality, round_centerpoint_to_grid_l1, tightness_instance, DirectionSample};
use lpfix::geometry::{
    angle, bisector_contains, default_eps_grid, limit_contains, limit_contains_bruteforce, subgradient_support,
};
use lpfix::grid::{min_grid_resolution, Grid};
use lpfix::grid_solver::{
    solve_grid_l1, verify_violation_certificate, CertificateEntry, GridOutcome, GridSolveParams,
    ViolationCertificate,
};
use lpfix::oracles::{make_affine_clamped, make_non_contraction, random_affine_instance, restrict_to_grid};
use lpfix::solver::{banach_cap, banach_iterate, solve_continuous_observed, survival_radius, SolveParams};
use lpfix::{Exec, PNorm};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Support values this close to zero are excluded from the oracle comparison.
const SUPPORT_EXCLUSION: f64 = 1e-6;
/// Slack on the tightness ceiling, relative to 1/(d+1).
const TIGHTNESS_SLACK: f64 = 0.1;
const CLOUD: usize = 1 << 17;

type NormPicker = fn(&mut ChaCha8Rng) -> PNorm;
type Criterion = fn() -> Verdict;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = PNorm::Two.norm(&v);
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn cube(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random()).collect()
}

fn random_p(rng: &mut ChaCha8Rng) -> PNorm {
    [PNorm::One, PNorm::Two, PNorm::Infinity, PNorm::General(1.5), PNorm::General(3.0), PNorm::General(7.0)]
        [rng.random_range(0..6)]
}

fn query_bound_reproduction() -> Verdict {
    let spec = SweepSpec {
        ds: vec![2, 3, 4],
        ps: vec![PNorm::One, PNorm::General(1.5), PNorm::Two, PNorm::General(3.0), PNorm::Infinity],
        epsilons: vec![1e-2, 1e-3],
        lambdas: vec![0.5, 0.9],
        instances: 5,
        seed: 2024,
        cloud: CLOUD,
        dirs: None,
        exec: Exec::Parallel,
    };
    let t = Instant::now();
    let rows = run_sweep(&spec);
    let bad: Vec<_> = rows
        .iter()
        .filter(|r| {
            r.error.is_some()
                || r.outcome != "fixpoint"
                || r.residual.is_none_or(|x| x > r.epsilon)
                || r.queries_used.zip(r.bound).is_none_or(|(q, b)| q as u64 > b)
        })
        .collect();
    let worst = rows
        .iter()
        .filter_map(|r| Some(r.queries_used? as f64 / r.bound? as f64))
        .fold(0.0, f64::max);
    let max_q = rows.iter().filter_map(|r| r.queries_used).max().unwrap_or(0);
    let mut detail = format!(
        "{} solves, {} violations, max queries {max_q}, max queries/bound {worst:.3}, {:.0}s",
        rows.len(),
        bad.len(),
        t.elapsed().as_secs_f64()
    );
    if let Some(r) = bad.first() {
        detail += &format!("; first violation: {r:?}");
    }
    verdict(bad.is_empty(), detail)
}

fn banach_cap_check() -> Verdict {
    let f = make_affine_clamped(DMatrix::identity(2, 2) * 0.5, vec![0.0, 0.0], PNorm::One).unwrap();
    let hand = banach_iterate(&f, &[1.0, 1.0], 0.1, 0.5, PNorm::One).unwrap();
    let hand_ok = hand.queries == 5 && hand.point.as_slice() == [0.0625, 0.0625];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut runs, mut over) = (0, Vec::new());
    for &lambda in &[0.5, 0.9] {
        for d in 2..=16 {
            for (k, p) in [PNorm::One, PNorm::General(1.5), PNorm::Two, PNorm::General(3.0), PNorm::Infinity]
                .into_iter()
                .enumerate()
            {
                let inst = random_affine_instance(d, p, lambda, (d * 10 + k) as u64).unwrap();
                let cap = banach_cap(d, 0.1, inst.lambda());
                for x0 in [vec![0.0; d], vec![1.0; d], vec![0.5; d], cube(&mut rng, d)] {
                    runs += 1;
                    match banach_iterate(&inst, &x0, 0.1, inst.lambda(), p) {
                        Ok(r) if r.queries as u64 <= cap => {}
                        other => over.push(format!("d={d} p={p} lambda={lambda}: {other:?}")),
                    }
                }
            }
        }
    }
    verdict(
        hand_ok && over.is_empty(),
        format!(
            "hand trace {} queries ending at {:?}; {runs} runs, {} over cap{}",
            hand.queries,
            hand.point.as_slice(),
            over.len(),
            over.first().map(|s| format!(" (first: {s})")).unwrap_or_default()
        ),
    )
}

fn ball_survival() -> Verdict {
    let ps = [PNorm::One, PNorm::General(1.5), PNorm::Two, PNorm::General(3.0), PNorm::Infinity];
    let (mut checked, mut violations, mut closest) = (0usize, 0usize, f64::INFINITY);
    let mut fixpoint_hits = 0;
    for run in 0..20u64 {
        let d = 2 + (run % 2) as usize;
        let p = ps[(run % 5) as usize];
        let eps = if run % 4 < 2 { 1e-2 } else { 1e-3 };
        let lambda = if run % 3 == 0 { 0.9 } else { 0.5 };
        let inst = random_affine_instance(d, p, lambda, 500 + run).unwrap();
        let star = inst.known_fixpoint().unwrap().clone();
        let r = survival_radius(eps, inst.lambda());
        let mut params = SolveParams::new(d, p, eps, inst.lambda());
        params.seed = run;
        params.cloud = 1 << 15;
        let rep = solve_continuous_observed(&inst, &params, |rec, killed| {
            if rec.residual <= eps {
                return;
            }
            let fc = inst.apply(&rec.query);
            if bisector_contains(&rec.query, &fc, &star, p) {
                fixpoint_hits += 1;
            }
            for z in killed.chunks_exact(d) {
                checked += 1;
                let dist = p.dist(z, &star);
                closest = closest.min(dist / r);
                if dist <= r {
                    violations += 1;
                }
            }
        });
        if rep.is_err() {
            violations += 1;
        }
    }
    verdict(
        violations == 0 && fixpoint_hits == 0,
        format!(
            "20 solves, {checked} discarded points checked, {violations} inside the survival ball, \
             fixpoint discarded {fixpoint_hits} times, closest discard at {closest:.2} radii"
        ),
    )
}

fn membership_oracle_equivalence() -> Verdict {
    let grid = default_eps_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut lines = Vec::new();
    let mut ok = true;
    let kinds: [(&str, NormPicker); 4] = [
        ("1", |_| PNorm::One),
        ("2", |_| PNorm::Two),
        ("inf", |_| PNorm::Infinity),
        ("general", |r| PNorm::General(r.random_range(1.05..8.0))),
    ];
    for (name, pick) in kinds {
        let (mut compared, mut disagree) = (0, 0);
        while compared < 10_000 {
            let p = pick(&mut rng);
            let d = rng.random_range(1..=5);
            let x = cube(&mut rng, d);
            let z = cube(&mut rng, d);
            let v = unit(&mut rng, d);
            let w: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a - b).collect();
            let Ok(s) = subgradient_support(&w, &v, p) else { continue };
            if s.abs() <= SUPPORT_EXCLUSION {
                continue;
            }
            compared += 1;
            if limit_contains(&x, &v, &z, p) != limit_contains_bruteforce(&x, &v, &z, p, &grid) {
                disagree += 1;
            }
        }
        ok &= disagree == 0;
        lines.push(format!("p={name}: {disagree}/{compared}"));
    }
    verdict(ok, format!("disagreements {}", lines.join(", ")))
}

fn geometry_lemmas() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 2000;
    let mut fails: Vec<(&str, usize)> = Vec::new();

    let mut count = 0;
    for _ in 0..trials {
        let (p, d) = (random_p(&mut rng), rng.random_range(2..=6));
        let x = cube(&mut rng, d);
        let v = unit(&mut rng, d);
        let lim = (1.0 / d as f64).sqrt();
        // Inner cone: rotate v by at most sqrt(1/d).
        let mut u = unit(&mut rng, d);
        let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        u.iter_mut().zip(&v).for_each(|(a, b)| *a -= dot * b);
        let un = PNorm::Two.norm(&u);
        let theta = rng.random_range(0.0..lim);
        let t = rng.random_range(0.01..3.0);
        let z: Vec<f64> = (0..d).map(|i| x[i] + t * (theta.cos() * v[i] + theta.sin() * u[i] / un)).collect();
        let dz: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a - b).collect();
        if angle(&dz, &v).unwrap() <= lim && !limit_contains(&x, &v, &z, p) {
            count += 1;
        }
        // Outer cone.
        let z = cube(&mut rng, d);
        let dz: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a - b).collect();
        if limit_contains(&x, &v, &z, p) && dz.iter().any(|&a| a != 0.0) && angle(&dz, &v).unwrap() > PI - lim {
            count += 1;
        }
    }
    fails.push(("cone", count));

    let mut count = 0;
    for _ in 0..trials {
        let (p, d) = (random_p(&mut rng), rng.random_range(1..=6));
        let x = cube(&mut rng, d);
        let v = unit(&mut rng, d);
        let z = cube(&mut rng, d);
        if !limit_contains(&x, &v, &z, p) {
            continue;
        }
        let z2: Vec<f64> = (0..d)
            .map(|i| {
                let step = rng.random_range(0.0..0.5);
                if v[i] > 0.0 {
                    z[i] + step
                } else if v[i] < 0.0 {
                    z[i] - step
                } else {
                    z[i] + rng.random_range(-0.5..0.5)
                }
            })
            .collect();
        if !limit_contains(&x, &v, &z2, p) {
            count += 1;
        }
    }
    fails.push(("orthant", count));

    let mut count = 0;
    for _ in 0..trials {
        let (p, d) = (random_p(&mut rng), rng.random_range(1..=6));
        let x = cube(&mut rng, d);
        let v = unit(&mut rng, d);
        let z = cube(&mut rng, d);
        let base = limit_contains(&x, &v, &z, p);
        for delta in [0.1, 1.0, 7.0] {
            let zr: Vec<f64> = (0..d).map(|i| x[i] + delta * (z[i] - x[i])).collect();
            if limit_contains(&x, &v, &zr, p) != base {
                count += 1;
            }
        }
    }
    fails.push(("ray", count));

    let mut count = 0;
    for _ in 0..trials {
        let p = [PNorm::One, PNorm::Two, PNorm::General(1.5), PNorm::General(3.0), PNorm::General(7.0)]
            [rng.random_range(0..5)];
        let d = rng.random_range(1..=6);
        let x = cube(&mut rng, d);
        let z = cube(&mut rng, d);
        let i = rng.random_range(0..d);
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut v = vec![0.0; d];
        v[i] = s;
        let expected = s * (z[i] - x[i]) >= 0.0;
        if limit_contains(&x, &v, &z, p) != expected {
            count += 1;
        }
    }
    fails.push(("axis", count));

    let mut count = 0;
    for _ in 0..100 {
        let (p, d) = (random_p(&mut rng), rng.random_range(1..=6));
        let dir = unit(&mut rng, d);
        let len = 2.0 * d as f64 * rng.random_range(1.0001..5.0);
        let x: Vec<f64> = dir.iter().map(|a| a * len).collect();
        let v: Vec<f64> = dir.iter().map(|a| -a).collect();
        for _ in 0..100 {
            let z = cube(&mut rng, d);
            if !limit_contains(&x, &v, &z, p) {
                count += 1;
            }
        }
    }
    fails.push(("pull-to-zero", count));

    let total: usize = fails.iter().map(|f| f.1).sum();
    let parts: Vec<String> = fails.iter().map(|(n, c)| format!("{n} {c}")).collect();
    verdict(total == 0, format!("violations per lemma ({trials}+ trials each): {}", parts.join(", ")))
}

fn tightness_ceiling() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut best_seen = Vec::new();
    let mut ok = true;
    for d in [2usize, 3] {
        let pts = tightness_instance(d);
        let sample = DirectionSample::new(d, 64 * d, 60 + d as u64)
            .unwrap()
            .with_extra(&vec![-1.0; d])
            .unwrap();
        let ceiling = (1.0 + TIGHTNESS_SLACK) / (d as f64 + 1.0);
        for p in [PNorm::General(1.5), PNorm::General(3.0)] {
            let mut best: f64 = 0.0;
            let mut candidates: Vec<Vec<f64>> = (0..1000).map(|_| cube(&mut rng, d)).collect();
            candidates.push(vec![0.0; d]);
            candidates.push(vec![1.0 / (d as f64 + 1.0); d]);
            for c in &candidates {
                let q = centerpoint_quality(&pts, c, p, &sample, Exec::Serial).unwrap().quality;
                best = best.max(q);
            }
            ok &= best <= ceiling;
            best_seen.push(format!("d={d} p={p}: {best:.3} (ceiling {ceiling:.3})"));
        }
    }
    verdict(ok, format!("best sampled rho over 1002 candidates: {}", best_seen.join(", ")))
}

fn grid_totality_and_certificates() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for (d, eps, lambda, seeds) in [(1usize, 1e-3, 0.9, 0..3u64), (2, 1e-2, 0.5, 0..2), (3, 0.25, 0.5, 0..2)] {
        let b = min_grid_resolution(d, eps, lambda);
        for seed in seeds {
            let inst = random_affine_instance(d, PNorm::One, lambda, 700 + seed).unwrap();
            let f = restrict_to_grid(&inst, b).unwrap();
            let params = GridSolveParams { seed, ..GridSolveParams::new(d) };
            match solve_grid_l1(&f, d, b, eps, inst.lambda(), &params) {
                Ok(rep) => {
                    let on_grid = rep.trace.iter().all(|r| {
                        let g = Grid::new(d, b).unwrap();
                        let coords: Vec<f64> = r.query.iter().map(|&k| k as f64 / (1u64 << b) as f64).collect();
                        g.locate(&coords).is_ok()
                    });
                    let found = matches!(rep.outcome, GridOutcome::FoundFixpoint { residual, .. } if residual <= eps);
                    ok &= found && on_grid;
                    notes.push(format!("d={d} b={b}: {} queries{}", rep.queries_used, if found { "" } else { " NO FIXPOINT" }));
                }
                Err(e) => {
                    ok = false;
                    notes.push(format!("d={d} b={b}: error {e}"));
                }
            }
        }
    }

    let hand = ViolationCertificate(vec![
        CertificateEntry { x: vec![0], b: 1, fx: vec![1.0] },
        CertificateEntry { x: vec![2], b: 1, fx: vec![0.0] },
    ]);
    let hand_ok = verify_violation_certificate(&hand, 1, 1, Exec::Serial).unwrap();
    let f = make_non_contraction(1, 1).unwrap();
    let params = GridSolveParams { enforce_resolution: false, ..GridSolveParams::new(1) };
    let cert_note = match solve_grid_l1(&f, 1, 1, 0.1, f.declared_lambda(), &params).map(|r| r.outcome) {
        Ok(GridOutcome::Certificate { certificate }) => {
            let verified = verify_violation_certificate(&certificate, 1, 1, Exec::Serial).unwrap();
            ok &= verified;
            let pairs: Vec<String> = certificate
                .0
                .iter()
                .map(|e| format!("({}, {})", e.coords()[0], e.fx[0]))
                .collect();
            format!("solver certificate {{{}}} verified={verified}", pairs.join(", "))
        }
        other => {
            ok = false;
            format!("non-contraction demo did not yield a certificate: {other:?}")
        }
    };
    ok &= hand_ok;
    verdict(
        ok,
        format!("{}; hand certificate {{(0,1),(1,0)}} verified={hand_ok}; {cert_note}", notes.join(", ")),
    )
}

fn rounding_transfer() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut checked, mut violations) = (0usize, 0usize);
    for _ in 0..1000 {
        let d = rng.random_range(1..=5);
        let b = rng.random_range(1..=6u32);
        let top = 1u64 << b;
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..d).map(|_| rng.random_range(0..=top) as f64 / top as f64).collect())
            .collect();
        let c = cube(&mut rng, d);
        let v = unit(&mut rng, d);
        let c2 = round_centerpoint_to_grid_l1(&c, b).unwrap().to_coords();
        for z in &pts {
            if limit_contains(&c, &v, z, PNorm::One) {
                checked += 1;
                if !limit_contains(&c2, &v, z, PNorm::One) {
                    violations += 1;
                }
            }
        }
    }
    verdict(violations == 0, format!("1000 triples, {checked} contained points checked, {violations} violations"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 8] = [
        ("query-bound reproduction", query_bound_reproduction),
        ("Banach cap", banach_cap_check),
        ("ball survival", ball_survival),
        ("membership oracle equivalence", membership_oracle_equivalence),
        ("geometry lemma suite", geometry_lemmas),
        ("tightness ceiling", tightness_ceiling),
        ("grid totality and certificates", grid_totality_and_certificates),
        ("rounding transfer", rounding_transfer),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let v = run();
        failed += usize::from(!v.pass);
        println!("criterion {n} [{name}]: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
