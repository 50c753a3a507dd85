//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs as a plain binary so the lines are always visible.

use std::f64::consts::PI;
use std::time::Instant;

use irs_core::channels::{
    build_double_irs, single_irs_baseline_a1, single_irs_baseline_a2, BaselineRanks, ChannelSet,
    SystemScenario,
};
use irs_core::linalg::{c64, complex_gaussian_matrix, phasor, random_phases, CMat, CVec};
use irs_core::mu_opt::{
    algorithm1, dft_codebook_search, mmse_receivers, zf_receivers, Algorithm1Options, MuSolveState,
    RxMode, StepRecord,
};
use irs_core::sdp::{bisection_maxmin, upper_bracket, MaxMinSdpInstance, FEASIBILITY_TOL};
use irs_core::su_opt::{
    ao_single_user, init_from_single_irs, opt_theta1, opt_theta2, single_irs_opt, AoOptions,
    DEFAULT_RESTARTS,
};
use irs_core::system::{rank_gain_report, rate, sinr_per_user, zf_min_sinr_formula, SinrContext};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dbm(p: f64) -> f64 {
    10f64.powf((p - 30.0) / 10.0)
}

/// Single-user AO runs shared by criteria 1 and 9.
struct SuiteOne {
    violations: usize,
    worst: f64,
    traces: Vec<Vec<f64>>,
}

fn suite_one() -> SuiteOne {
    let kappas = [-10.0, 0.0, 10.0];
    let mut out = SuiteOne {
        violations: 0,
        worst: f64::INFINITY,
        traces: Vec::new(),
    };
    for draw in 0..200u64 {
        let sc = SystemScenario::single_user(kappas[draw as usize % 3])
            .with_split(16, 16)
            .with_seed(draw);
        let chs = build_double_irs(&sc, &mut sc.rng()).unwrap();
        let ctx = SinrContext::from_scenario(&sc).unwrap();
        let base = single_irs_baseline_a1(&chs).unwrap();
        let mut r = rng(10_000 + draw);
        let single =
            single_irs_opt(&base, &ctx, AoOptions::default(), DEFAULT_RESTARTS, &mut r).unwrap();
        let init = init_from_single_irs(&chs, &ctx, &single).unwrap();
        let st = ao_single_user(&chs, &ctx, init.state, AoOptions::default()).unwrap();
        let rel = (st.snr - single.snr) / single.snr;
        out.worst = out.worst.min(rel);
        if rel < -1e-9 {
            out.violations += 1;
        }
        out.traces.push(st.substep_trace);
    }
    out
}

fn criterion1(s: &SuiteOne) -> Verdict {
    verdict(
        s.violations == 0,
        format!(
            "200 draws, violations {}, worst relative margin {:.3e}",
            s.violations, s.worst
        ),
    )
}

/// `h = h0 + sum_i x_i v_i` as a function of one reflect vector, built from
/// the raw links.
fn affine_in_theta2(chs: &ChannelSet, theta1: &CVec) -> (CVec, Vec<CVec>) {
    let incident = &chs.d * theta1.component_mul(&chs.u1.column(0)) + chs.u2.column(0);
    let h0 = &chs.g1 * theta1.component_mul(&chs.u1.column(0));
    let v = (0..chs.m2())
        .map(|i| chs.g2.column(i) * incident[i])
        .collect();
    (h0, v)
}

fn affine_in_theta1(chs: &ChannelSet, theta2: &CVec) -> (CVec, Vec<CVec>) {
    let h0 = &chs.g2 * theta2.component_mul(&chs.u2.column(0));
    let g2t = &chs.g2 * CMat::from_diagonal(theta2);
    let v = (0..chs.m1())
        .map(|m| (&g2t * chs.d.column(m) + chs.g1.column(m)) * chs.u1[(m, 0)])
        .collect();
    (h0, v)
}

/// Largest `|w^H (h0 + sum x_i v_i)|^2` over the `points`-phase grid.
fn grid_max(w: &CVec, h0: &CVec, v: &[CVec], points: usize) -> f64 {
    let b0 = w.dotc(h0);
    let b: Vec<_> = v.iter().map(|vi| w.dotc(vi)).collect();
    let grid: Vec<_> = (0..points)
        .map(|i| phasor(2.0 * PI * i as f64 / points as f64))
        .collect();
    let total = points.pow(b.len() as u32);
    let mut best = 0.0f64;
    for idx in 0..total {
        let mut acc = b0;
        let mut rest = idx;
        for bi in &b {
            acc += bi * grid[rest % points];
            rest /= points;
        }
        best = best.max(acc.norm_sqr());
    }
    best
}

fn random_su_set(seed: u64, m1: usize, m2: usize) -> ChannelSet {
    let mut r = rng(seed);
    ChannelSet::from_links(
        complex_gaussian_matrix(m1, 1, &mut r),
        complex_gaussian_matrix(m2, 1, &mut r),
        complex_gaussian_matrix(m2, m1, &mut r),
        complex_gaussian_matrix(3, m1, &mut r),
        complex_gaussian_matrix(3, m2, &mut r),
    )
    .unwrap()
}

fn criterion2() -> Verdict {
    const POINTS: usize = 64;
    // every phase on the grid is within pi/64 of the optimum's phase
    let floor = (PI / POINTS as f64).cos().powi(2);
    let (mut beaten, mut loose, mut runs) = (0, 0, 0);
    let mut worst = f64::INFINITY;
    for inst in 0..50u64 {
        let m = 1 + (inst % 3) as usize;
        let chs = random_su_set(20_000 + inst, m, m);
        let mut r = rng(21_000 + inst);
        let w = complex_gaussian_matrix(3, 1, &mut r).column(0).into_owned();
        let (t1, t2) = (random_phases(m, &mut r), random_phases(m, &mut r));

        let x2 = opt_theta2(&chs, &t1, &w).unwrap();
        let (h0, v) = affine_in_theta2(&chs, &t1);
        let closed2 = (w.dotc(&h0)
            + v.iter()
                .zip(x2.iter())
                .map(|(vi, x)| w.dotc(vi) * x)
                .sum::<num_complex::Complex64>())
        .norm_sqr();
        let grid2 = grid_max(&w, &h0, &v, POINTS);

        let x1 = opt_theta1(&chs, &t2, &w).unwrap();
        let (h0, v) = affine_in_theta1(&chs, &t2);
        let closed1 = (w.dotc(&h0)
            + v.iter()
                .zip(x1.iter())
                .map(|(vi, x)| w.dotc(vi) * x)
                .sum::<num_complex::Complex64>())
        .norm_sqr();
        let grid1 = grid_max(&w, &h0, &v, POINTS);

        for (closed, grid) in [(closed2, grid2), (closed1, grid1)] {
            runs += 1;
            worst = worst.min(closed / grid);
            if closed < grid * (1.0 - 1e-12) {
                beaten += 1;
            }
            if grid < closed * floor * (1.0 - 1e-12) {
                loose += 1;
            }
        }
    }
    verdict(
        beaten == 0 && loose == 0,
        format!("{runs} solves, grid beat closed form {beaten}x, grid outside resolution slack {loose}x, min closed/grid {worst:.12}"),
    )
}

fn criterion3() -> Verdict {
    let draws = 50;
    let (mut double_gain, mut single_gain) = (0.0, 0.0);
    for draw in 0..draws as u64 {
        let mut rates = [[0.0; 2]; 2];
        for (i, m) in [16usize, 32].into_iter().enumerate() {
            let sc = SystemScenario::single_user(10.0)
                .with_split(m / 2, m / 2)
                .with_seed(30_000 + draw);
            let chs = build_double_irs(&sc, &mut sc.rng()).unwrap();
            let ctx = SinrContext::from_scenario(&sc).unwrap();
            let base = single_irs_baseline_a1(&chs).unwrap();
            let mut r = rng(31_000 + draw);
            let single =
                single_irs_opt(&base, &ctx, AoOptions::default(), DEFAULT_RESTARTS, &mut r)
                    .unwrap();
            let init = init_from_single_irs(&chs, &ctx, &single).unwrap();
            let st = ao_single_user(&chs, &ctx, init.state, AoOptions::default()).unwrap();
            rates[i] = [rate(st.snr), rate(single.snr)];
        }
        double_gain += rates[1][0] - rates[0][0];
        single_gain += rates[1][1] - rates[0][1];
    }
    double_gain /= draws as f64;
    single_gain /= draws as f64;
    verdict(
        (double_gain - 4.0).abs() <= 0.7 && (single_gain - 2.0).abs() <= 0.7,
        format!("M 16->32 over {draws} draws: double-IRS gain {double_gain:.3} b/s/Hz (4 +- 0.7), single-IRS gain {single_gain:.3} b/s/Hz (2 +- 0.7)"),
    )
}

fn multi_user_pair(sc: &SystemScenario) -> (ChannelSet, ChannelSet) {
    let mut r = sc.rng();
    let double = build_double_irs(sc, &mut r).unwrap();
    let base = single_irs_baseline_a2(
        sc,
        BaselineRanks {
            irs_bs: 2,
            user_irs: sc.users,
        },
        &mut r,
    )
    .unwrap();
    (double, base)
}

fn criterion4() -> Verdict {
    let mut hits = 0;
    for draw in 0..100u64 {
        let sc = SystemScenario::multi_user().with_seed(40_000 + draw);
        let (double, base) = multi_user_pair(&sc);
        let rep = rank_gain_report(&double, &base, &mut rng(41_000 + draw)).unwrap();
        if rep.rank_h == 5 && rep.rank_h_bar == 2 {
            hits += 1;
        }
    }
    verdict(
        hits >= 95,
        format!("rank(H) = 5 and rank(H_bar) = 2 on {hits}/100 draws (need 95)"),
    )
}

/// Algorithm-1 runs shared by criteria 5, 6 and 9.
struct SuiteFive {
    double: [f64; 2],
    single: [f64; 2],
    traces: Vec<Vec<f64>>,
    steps: Vec<StepRecord>,
}

fn suite_five() -> SuiteFive {
    let mut out = SuiteFive {
        double: [0.0; 2],
        single: [0.0; 2],
        traces: Vec::new(),
        steps: Vec::new(),
    };
    let draws = 20;
    for draw in 0..draws as u64 {
        for (i, p) in [20.0, 30.0].into_iter().enumerate() {
            let sc = SystemScenario::multi_user()
                .with_seed(50_000 + draw)
                .with_equal_power(dbm(p));
            let (double, base) = multi_user_pair(&sc);
            let ctx = SinrContext::from_scenario(&sc).unwrap();
            for (set, acc, salt) in [
                (&double, &mut out.double, 0u64),
                (&base, &mut out.single, 1),
            ] {
                let init = dft_codebook_search(set, &ctx, RxMode::Mmse)
                    .unwrap()
                    .into_state(set, &ctx)
                    .unwrap();
                let mut r = rng(51_000 + 2 * draw + salt);
                let st = algorithm1(set, &ctx, init, Algorithm1Options::default(), &mut r).unwrap();
                acc[i] += st.min_sinr / draws as f64;
                out.traces.push(st.trace);
                out.steps.extend(st.steps);
            }
        }
    }
    out
}

fn criterion5(s: &SuiteFive) -> Verdict {
    let single_growth = s.single[1] / s.single[0] - 1.0;
    let double_growth = s.double[1] / s.double[0] - 1.0;
    verdict(
        single_growth < 0.05 && double_growth > 0.5,
        format!(
            "20 -> 30 dBm over 20 draws: single-IRS mean min-SINR {:.4} -> {:.4} ({:+.1}%), double-IRS {:.2} -> {:.2} ({:+.1}%)",
            s.single[0],
            s.single[1],
            100.0 * single_growth,
            s.double[0],
            s.double[1],
            100.0 * double_growth
        ),
    )
}

/// Tiny-instance runs shared by criteria 6, 7 and 9.
struct SuiteSeven {
    hits: usize,
    worst: f64,
    traces: Vec<Vec<f64>>,
    steps: Vec<StepRecord>,
}

fn tiny_set(seed: u64) -> ChannelSet {
    let mut r = rng(seed);
    ChannelSet::from_links(
        complex_gaussian_matrix(2, 2, &mut r),
        complex_gaussian_matrix(2, 2, &mut r),
        complex_gaussian_matrix(2, 2, &mut r),
        complex_gaussian_matrix(2, 2, &mut r),
        complex_gaussian_matrix(2, 2, &mut r),
    )
    .unwrap()
}

/// Exhaustive 16-point grid with MMSE receivers; `H` is formed from the
/// raw links.
fn tiny_grid_optimum(chs: &ChannelSet, ctx: &SinrContext) -> f64 {
    let grid: Vec<_> = (0..16)
        .map(|i| phasor(2.0 * PI * i as f64 / 16.0))
        .collect();
    let mut best = 0.0f64;
    for idx in 0..16usize.pow(4) {
        let t1 = CVec::from_vec(vec![grid[idx % 16], grid[(idx / 16) % 16]]);
        let t2 = CVec::from_vec(vec![grid[(idx / 256) % 16], grid[idx / 4096]]);
        let h = &chs.g2
            * CMat::from_diagonal(&t2)
            * (&chs.d * CMat::from_diagonal(&t1) * &chs.u1 + &chs.u2)
            + &chs.g1 * CMat::from_diagonal(&t1) * &chs.u1;
        let w = mmse_receivers(&h, ctx).unwrap().w;
        let m = sinr_per_user(&h, &w, ctx)
            .unwrap()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        best = best.max(m);
    }
    best
}

fn suite_seven() -> SuiteSeven {
    let ctx = SinrContext::equal(2, 1.0, 1.0).unwrap();
    let mut out = SuiteSeven {
        hits: 0,
        worst: f64::INFINITY,
        traces: Vec::new(),
        steps: Vec::new(),
    };
    for seed in 0..50u64 {
        let chs = tiny_set(70_000 + seed);
        let grid = tiny_grid_optimum(&chs, &ctx);
        let init = dft_codebook_search(&chs, &ctx, RxMode::Mmse)
            .unwrap()
            .into_state(&chs, &ctx)
            .unwrap();
        // the iteration cap is lifted so that only the fractional-increase
        // rule stops the algorithm
        let opts = Algorithm1Options {
            max_iterations: 100,
            ..Default::default()
        };
        let st = algorithm1(&chs, &ctx, init, opts, &mut rng(71_000 + seed)).unwrap();
        let ratio = st.min_sinr / grid;
        out.worst = out.worst.min(ratio);
        if ratio >= 0.9 {
            out.hits += 1;
        }
        out.traces.push(st.trace);
        out.steps.extend(st.steps);
    }
    out
}

fn criterion7(s: &SuiteSeven) -> Verdict {
    verdict(
        s.hits >= 45,
        format!(
            "Algorithm 1 >= 0.9x grid optimum on {}/50 seeds (need 45), worst ratio {:.3}",
            s.hits, s.worst
        ),
    )
}

fn criterion6(five: &SuiteFive, seven: &SuiteSeven) -> Verdict {
    let mut r = rng(60_000);
    // homogenization identity
    let mut worst_identity = 0.0f64;
    for _ in 0..1000 {
        let m = 1 + (rand::Rng::random_range(&mut r, 0..8usize));
        let q = complex_gaussian_matrix(m, 1, &mut r).column(0).into_owned();
        let qb = complex_gaussian_matrix(1, 1, &mut r)[(0, 0)];
        let theta = random_phases(m, &mut r);
        let inst =
            MaxMinSdpInstance::new(vec![vec![q.clone()]], vec![vec![qb]], vec![1.0]).unwrap();
        let direct = (q.dotc(&theta) + qb).norm_sqr();
        let mut tilde = theta.clone().resize_vertically(m + 1, c64(1.0, 0.0));
        tilde[m] = c64(1.0, 0.0);
        let lifted = inst.homogenized_term(0, 0, &tilde);
        worst_identity = worst_identity.max((lifted - direct).abs() / direct.max(1e-300));
    }
    // analytic scalar boundary: max_theta |q theta + qbar|^2 / s = (|q| + |qbar|)^2 / s
    let mut worst_boundary = 0.0f64;
    let eps = 0.1;
    for _ in 0..20 {
        let q = complex_gaussian_matrix(1, 1, &mut r)[(0, 0)] * 3.0;
        let qb = complex_gaussian_matrix(1, 1, &mut r)[(0, 0)] * 3.0;
        let s = 0.5 + rand::Rng::random::<f64>(&mut r);
        let inst = MaxMinSdpInstance::new(
            vec![vec![CVec::from_element(1, q)]],
            vec![vec![qb]],
            vec![s],
        )
        .unwrap();
        let exact = (q.norm() + qb.norm()).powi(2) / s;
        // an irregular bracket, so no midpoint lands on the optimum by construction
        let hi = upper_bracket(&inst) * (1.3 + rand::Rng::random::<f64>(&mut r)) + 0.37;
        let b = bisection_maxmin(&inst, 0.0, hi, eps).unwrap();
        worst_boundary = worst_boundary.max((b.delta - exact).abs());
    }
    // randomized objective against the relaxation
    let mut checked = 0;
    let mut violations = 0;
    for s in five.steps.iter().chain(&seven.steps) {
        if let (Some(delta), Some(e)) = (s.relaxed_delta, s.eps) {
            if s.bisection_steps == 0 {
                continue;
            }
            checked += 1;
            // the infeasibility verdict carries the solver tolerance,
            // normalised per user by noise * (1 + target)
            let slack = FEASIBILITY_TOL * (1.0 + delta + e);
            if s.candidate > delta + e + slack {
                violations += 1;
            }
        }
    }
    verdict(
        worst_identity <= 1e-10 && worst_boundary <= eps && violations == 0 && checked > 0,
        format!(
            "identity max rel err {worst_identity:.2e} (1000 triples), scalar boundary max err {worst_boundary:.3e} (eps {eps}), randomized <= delta* + eps on {}/{checked} relaxations",
            checked - violations
        ),
    )
}

fn criterion8() -> Verdict {
    let mut r = rng(80_000);
    let (mut zf_err, mut formula_err, mut dominance) = (0.0f64, 0.0f64, f64::INFINITY);
    for draw in 0..100u64 {
        let sc = SystemScenario::multi_user().with_seed(81_000 + draw);
        let chs = build_double_irs(&sc, &mut sc.rng()).unwrap();
        let ctx = SinrContext::from_scenario(&sc).unwrap();
        let st = MuSolveState::with_receivers(
            &chs,
            &ctx,
            random_phases(16, &mut r),
            random_phases(16, &mut r),
            RxMode::Mmse,
        )
        .unwrap();
        let pat =
            irs_core::system::ReflectPattern::new(st.theta1.clone(), st.theta2.clone()).unwrap();
        let h = irs_core::system::channel_matrix(&chs, &pat).unwrap();
        let zf = zf_receivers(&h, &ctx).unwrap();
        let prod = zf.w.adjoint() * &h;
        for i in 0..h.ncols() {
            for j in 0..h.ncols() {
                let target = if i == j {
                    1.0 / ctx.powers()[i].sqrt()
                } else {
                    0.0
                };
                zf_err = zf_err.max((prod[(i, j)] - c64(target, 0.0)).norm());
            }
        }
        let zf_sinr = sinr_per_user(&h, &zf.w, &ctx).unwrap();
        let zf_min = zf_sinr.iter().copied().fold(f64::INFINITY, f64::min);
        let formula = zf_min_sinr_formula(&h, ctx.powers()[0], ctx.noise()).unwrap();
        formula_err = formula_err.max((zf_min - formula).abs() / formula);
        let mmse = sinr_per_user(&h, &mmse_receivers(&h, &ctx).unwrap().w, &ctx).unwrap();
        for k in 0..h.ncols() {
            dominance = dominance.min((mmse[k] - zf_sinr[k]) / zf_sinr[k]);
        }
        for _ in 0..100 {
            let w = complex_gaussian_matrix(h.nrows(), h.ncols(), &mut r);
            let other = sinr_per_user(&h, &w, &ctx).unwrap();
            for k in 0..h.ncols() {
                dominance = dominance.min((mmse[k] - other[k]) / other[k]);
            }
        }
    }
    verdict(
        zf_err <= 1e-9 && formula_err <= 1e-8 && dominance >= -1e-10,
        format!(
            "100 instances: max |W^H H - P^-1| {zf_err:.2e}, ZF formula rel err {formula_err:.2e}, min relative MMSE advantage {dominance:.2e}"
        ),
    )
}

fn criterion9(one: &SuiteOne, five: &SuiteFive, seven: &SuiteSeven) -> Verdict {
    let su_worst = one
        .traces
        .iter()
        .flat_map(|t| t.windows(2).map(|p| p[1] - p[0]))
        .fold(f64::INFINITY, f64::min);
    let mu_decreases = five
        .traces
        .iter()
        .chain(&seven.traces)
        .flat_map(|t| t.windows(2))
        .filter(|p| p[1] < p[0])
        .count();
    let su_runs = one.traces.len();
    let mu_runs = five.traces.len() + seven.traces.len();
    verdict(
        su_worst >= -1e-10 && mu_decreases == 0,
        format!(
            "single-user AO: {su_runs} runs, smallest per-step change {su_worst:.3e}; Algorithm 1: {mu_runs} runs, {mu_decreases} decreases"
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, started: Instant, v: Verdict| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            failures += 1;
        }
        println!(
            "[{tag}] criterion {id} ({name}): {} [{:.1}s]",
            v.detail,
            started.elapsed().as_secs_f64()
        );
    };

    let t = Instant::now();
    let one = suite_one();
    report(1, "prop1-property", t, criterion1(&one));
    let t = Instant::now();
    report(2, "closed-form-oracles", t, criterion2());
    let t = Instant::now();
    report(3, "power-scaling", t, criterion3());
    let t = Instant::now();
    report(4, "rank-reproduction", t, criterion4());
    let t = Instant::now();
    let five = suite_five();
    report(5, "max-min-saturation", t, criterion5(&five));
    let t = Instant::now();
    let seven = suite_seven();
    let c7 = criterion7(&seven);
    let t6 = Instant::now();
    report(6, "sdr-machinery", t6, criterion6(&five, &seven));
    report(7, "tiny-instance-oracle", t, c7);
    let t = Instant::now();
    report(8, "receiver-identities", t, criterion8());
    let t = Instant::now();
    report(9, "ao-monotonicity", t, criterion9(&one, &five, &seven));

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
