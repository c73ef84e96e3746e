//! Acceptance suite. Every test prints one `PASS`/`FAIL` line with the
//! measured quantities and the tolerance it was held to, then asserts.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture` to see
//! the lines.

use mcre::chain::{derive_constants, step, ContractionParams};
use mcre::coupling::{couple_step, coupling_campaign, CaseTaken, Direction};
use mcre::env::EnvironmentSpec;
use mcre::estimate::{compare_templates, mixing_curve, rate_fit, CurvePoint, DecayCurve, EventClass, RateTemplate};
use mcre::models::multivar::spectral_radius;
use mcre::models::{self, adversarial, run_sgld_risk, subordinate_norm, SgldVarModel, SupportAnchor, ZooModel};
use mcre::rng::RngStream;
use mcre::stats::{binomial_se, ks_two_sample};
use mcre::verify::{check_contractivity, check_minorization, check_support, InputSampler};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

fn report(criterion: &str, pass: bool, detail: impl AsRef<str>) {
    println!("{} {criterion}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
}

fn unit_offset(zoo: &ZooModel, frac: f64) -> Vec<f64> {
    let dim = zoo.chain.dim();
    let mut e = vec![0.0; dim];
    e[0] = 1.0;
    let unit = zoo.chain.metric.norm(&e);
    e[0] = frac * zoo.minor.pair_radius / unit;
    e
}

#[test]
fn constant_exactness() {
    let mut rng = RngStream::new(101, 0).rng();
    let mut failures = 0;
    let mut worst = String::new();
    for _ in 0..1000 {
        let rho: f64 = rng.random_range(0.01..0.99);
        let r: f64 = rng.random_range(0.01..10.0);
        let k: f64 = rng.random_range(0.01..10.0);
        let c = derive_constants(ContractionParams::new(rho, r).unwrap(), k).unwrap();
        let rho_p = (1.0 + rho) / 2.0;
        let r_p = 2.0 * r / (1.0 - rho);
        let target = r_p / (4.0 * r_p + 4.0 * k);
        // minimal N by direct search
        let mut n = 1usize;
        while rho_p.powi(n as i32 - 1) > target {
            n += 1;
        }
        let ok = c.rho_prime == rho_p && (c.r_prime - r_p).abs() <= 1e-12 * r_p && c.block == n && c.k_star(100) == 50 / n;
        if !ok {
            failures += 1;
            worst = format!("rho={rho} R={r} K={k}: got N={} expected {n}", c.block);
        }
    }
    let pinned = derive_constants(ContractionParams::new(0.5, 1.0).unwrap(), 2.5).unwrap();
    let pass = failures == 0 && pinned.block == 8 && pinned.k_star(100) == 6;
    report(
        "constant exactness",
        pass,
        format!("{failures}/1000 mismatches {worst}; (0.5, 1, 2.5) gives N = {} (expected 8)", pinned.block),
    );
    assert!(pass);
}

#[test]
fn assumption_certification() {
    const TRIALS: usize = 1_000_000;
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, zoo) in models::zoo().unwrap().into_iter().enumerate() {
        let root = RngStream::new(202, i as u64);
        let c = check_contractivity(&zoo.chain, &zoo.env, &InputSampler::default(), TRIALS, root.child(0)).unwrap();
        let xs = zoo.env.generate(0, 2, &mut root.child(1).rng());
        let base = zoo.chain.reference.clone();
        let shifted: Vec<f64> = base.iter().map(|v| v + 3.0).collect();
        let pairs = [
            (xs.get(0).unwrap().to_vec(), base.clone(), unit_offset(&zoo, 0.999)),
            (xs.get(1).unwrap().to_vec(), shifted, unit_offset(&zoo, -0.5)),
        ];
        let mut minor_viol = 0;
        let mut support_viol = 0;
        for (j, (x, y1, off)) in pairs.iter().enumerate() {
            let y2: Vec<f64> = y1.iter().zip(off).map(|(a, b)| a + b).collect();
            let m = check_minorization(&zoo.chain, &zoo.minor, x, y1, &y2, TRIALS, root.child(10 + j as u64)).unwrap();
            let s = check_support(&zoo.minor, x, y1, &y2, TRIALS, SupportAnchor::DriftImage, root.child(20 + j as u64)).unwrap();
            minor_viol += m.violations;
            support_viol += s.violations;
        }
        pass &= c.violations == 0 && minor_viol == 0 && support_viol == 0;
        lines.push(format!(
            "{}: contractivity {}/{TRIALS}, minorization {minor_viol}, support {support_viol}",
            zoo.chain.name, c.violations
        ));
    }
    let adv = adversarial().unwrap();
    let env = EnvironmentSpec::iid_gaussian(1, 0.0, 1.0).unwrap();
    let a = check_contractivity(&adv, &env, &InputSampler::default(), 100_000, RngStream::new(203, 0)).unwrap();
    let rejected = a.violations > 0 && a.witness.is_some();
    pass &= rejected;
    lines.push(format!(
        "adversarial: {} violations, witness {}",
        a.violations,
        a.witness.map(|w| w.to_string()).unwrap_or_else(|| "none".into())
    ));
    report("assumption certification (zero violations, 5 sigma)", pass, lines.join("; "));
    assert!(pass);
}

#[test]
fn coupling_marginal_correctness() {
    const CONFIGS: usize = 20;
    const SAMPLES: usize = 4000;
    let start = std::time::Instant::now();
    let zoo = models::zoo().unwrap();
    let tests = zoo.len() * CONFIGS * 2 * 2; // two chains, up to two coordinates
    let level = 0.01 / tests as f64;
    let mut min_p = 1.0f64;
    let mut rejections = 0;
    for (i, m) in zoo.iter().enumerate() {
        let dim = m.chain.dim();
        let root = RngStream::new(303, i as u64);
        let mut rng = root.rng();
        let xs = m.env.generate(0, CONFIGS, &mut rng);
        for c in 0..CONFIGS {
            let x = xs.get(c as i64).unwrap().to_vec();
            let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let frac = rng.random_range(0.05..1.0) * if c % 2 == 0 { 1.0 } else { -1.0 };
            let qp: Vec<f64> = q.iter().zip(unit_offset(m, frac)).map(|(a, b)| a + b).collect();
            let stream = root.child(c as u64 + 1);
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..SAMPLES as u64)
                .into_par_iter()
                .map(|s| couple_step(&m.chain, &m.minor, &x, &q, &qp, &mut stream.child(s).rng()).unwrap().next)
                .collect();
            let direct = |start: &[f64], tag: u64| -> Vec<Vec<f64>> {
                let mut r = stream.child(u64::MAX - tag).rng();
                (0..SAMPLES).map(|_| step(&m.chain, start, &x, &mut r).unwrap()).collect()
            };
            for (which, start) in [(0usize, &q), (1, &qp)] {
                let reference = direct(start, which as u64);
                for coord in 0..dim.min(2) {
                    let a: Vec<f64> = pairs.iter().map(|p| if which == 0 { p.0[coord] } else { p.1[coord] }).collect();
                    let b: Vec<f64> = reference.iter().map(|v| v[coord]).collect();
                    let ks = ks_two_sample(&a, &b);
                    min_p = min_p.min(ks.p_value);
                    if ks.p_value < level {
                        rejections += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = rejections == 0 && secs <= 300.0;
    report(
        "coupling marginal correctness",
        pass,
        format!("{rejections} KS rejections at Bonferroni level {level:.2e}; smallest p = {min_p:.3e}; {secs:.1}s (limit 300s)"),
    );
    assert!(pass);
}

#[test]
fn one_step_coupling_contracts() {
    const CALLS: usize = 1_000_000;
    let zoo = models::zoo().unwrap();
    let per_model = CALLS / zoo.len();
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, m) in zoo.iter().enumerate() {
        let dim = m.chain.dim();
        let limit = 4.0 * m.minor.pair_radius + 4.0 * m.minor.k;
        let root = RngStream::new(404, i as u64);
        let xs = m.env.generate(0, per_model, &mut root.rng());
        let rows: Vec<(f64, f64, bool)> = (0..per_model)
            .into_par_iter()
            .map(|t| {
                let mut rng = root.child(t as u64).rng();
                let x = xs.get(t as i64).unwrap();
                let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
                let off = unit_offset(m, rng.random_range(-1.0..1.0));
                let mut qp: Vec<f64> = q.iter().zip(&off).map(|(a, b)| a + b).collect();
                if dim > 1 {
                    // random direction, rescaled into the pair radius
                    let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = m.chain.metric.norm(&dir);
                    let r = rng.random_range(0.0..1.0) * m.minor.pair_radius / norm;
                    qp = q.iter().zip(&dir).map(|(a, d)| a + r * d).collect();
                }
                let out = couple_step(&m.chain, &m.minor, x, &q, &qp, &mut rng).unwrap();
                let dist = m.chain.metric.dist(&out.next.0, &out.next.1);
                (dist, m.minor.eta(x), out.case_taken == CaseTaken::NuCoupled)
            })
            .collect();
        let worst = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        let exceed = rows.iter().filter(|r| r.0 > limit).count();
        let coupled = rows.iter().filter(|r| r.2).count() as f64;
        let expected: f64 = rows.iter().map(|r| r.1).sum();
        let se = rows.iter().map(|r| r.1 * (1.0 - r.1)).sum::<f64>().sqrt();
        let freq_ok = coupled >= expected - 4.0 * se;
        pass &= exceed == 0 && freq_ok;
        lines.push(format!(
            "{}: {exceed} of {per_model} beyond 4R+4K = {limit:.3} (max {worst:.3}); coupled {coupled} vs sum eta {expected:.1} - 4 SE {:.1}",
            m.chain.name,
            4.0 * se
        ));
    }
    report("one-step coupling contracts pathwise", pass, lines.join("; "));
    assert!(pass);
}

#[test]
fn analytic_bound_domination() {
    let horizons = [50, 100, 200, 400];
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, m, starts) in [
        ("sgld-var", models::sgld_var().unwrap(), (vec![-1.0], vec![1.0])),
        ("additive-gaussian", models::additive_gaussian().unwrap(), (vec![-10.0], vec![10.0])),
    ] {
        let rows = coupling_campaign(
            &m.chain,
            &m.minor,
            &m.env,
            (&starts.0, &starts.1),
            &horizons,
            10_000,
            Direction::Forward,
            RngStream::new(505, 0),
        )
        .unwrap();
        for r in rows {
            let se = (binomial_se(r.failure_rate, r.replications).powi(2) + r.bound_se.powi(2)).sqrt();
            let ok = r.failure_rate <= r.mean_bound + 3.0 * se;
            pass &= ok;
            lines.push(format!("{name} n={}: {} <= {:.5} + 3*{:.5}", r.n, r.failure_rate, r.mean_bound, se));
        }
    }
    let eta = SgldVarModel::new(1.0, 0.1, 0.5).unwrap().eta();
    lines.push(format!("sgld eta = {eta:.5e}"));
    report("analytic bound domination", pass, lines.join("; "));
    assert!(pass);
}

#[test]
fn constant_eta_exponential_decay() {
    let m = models::sgld_var().unwrap();
    let eta = SgldVarModel::new(1.0, 0.1, 0.5).unwrap().eta();
    let schedule = derive_constants(m.chain.contraction, m.minor.k).unwrap();
    let horizons: Vec<usize> = (1..=16).map(|k| 100 * k).collect();
    let reps = 10_000;
    let rows = coupling_campaign(
        &m.chain,
        &m.minor,
        &m.env,
        (&[-1.0], &[1.0]),
        &horizons,
        reps,
        Direction::Forward,
        RngStream::new(606, 0),
    )
    .unwrap();
    let ks: Vec<f64> = rows.iter().map(|r| schedule.k_star(r.n) as f64).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.failure_rate.ln()).collect();
    let mk = ks.iter().sum::<f64>() / ks.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let slope =
        ks.iter().zip(&ly).map(|(k, y)| (k - mk) * (y - my)).sum::<f64>() / ks.iter().map(|k| (k - mk).powi(2)).sum::<f64>();
    let target = (1.0 - eta).ln();
    let slope_ok = ((slope - target) / target).abs() <= 0.2;
    let curve = DecayCurve::new(
        rows.iter()
            .map(|r| CurvePoint { index: r.n, estimate: r.failure_rate, std_error: binomial_se(r.failure_rate, reps) })
            .collect(),
    )
    .unwrap();
    let fits = compare_templates(&curve).unwrap();
    let ranking: Vec<String> = fits.iter().map(|f| format!("{}({:.1})", f.template, f.score)).collect();
    let best_ok = fits[0].template == RateTemplate::Geometric;
    let pass = slope_ok && best_ok;
    report(
        "constant-eta exponential decay",
        pass,
        format!("slope {slope:.6} vs log(1-eta) {target:.6} (within 20%: {slope_ok}); template ranking {}", ranking.join(" < ")),
    );
    assert!(pass);
}

fn synthetic(t: RateTemplate) -> DecayCurve {
    let mut grid: Vec<usize> = (0..48).map(|i| (8.0 * 512f64.powf(i as f64 / 47.0)).round() as usize).collect();
    grid.dedup();
    DecayCurve::from_fn(grid, |n| {
        let n = n as f64;
        let l = n.log2();
        match t {
            RateTemplate::Geometric => 0.99f64.powf(n),
            RateTemplate::Bernstein => (-n / (l * l.log2())).exp(),
            RateTemplate::Stretched => (-(n.sqrt())).exp(),
            RateTemplate::Polynomial => l / n,
        }
    })
    .unwrap()
}

#[test]
fn rate_shape_discrimination() {
    let mut pass = true;
    let mut lines = Vec::new();
    for truth in RateTemplate::ALL {
        let curve = synthetic(truth);
        let own = rate_fit(&curve, truth).unwrap();
        for other in RateTemplate::ALL.into_iter().filter(|o| *o != truth) {
            let f = rate_fit(&curve, other).unwrap();
            if f.score <= own.score {
                pass = false;
                lines.push(format!("{truth} data: {other} scored {:.2} <= {:.2}", f.score, own.score));
            }
        }
        let best = compare_templates(&curve).unwrap()[0].template;
        pass &= best == truth;
        lines.push(format!("{truth} data -> {best}"));
    }
    let geo = rate_fit(&synthetic(RateTemplate::Geometric), RateTemplate::Geometric).unwrap();
    let poly = rate_fit(&synthetic(RateTemplate::Polynomial), RateTemplate::Polynomial).unwrap();
    let params_ok = (geo.rate - 0.99).abs() < 1e-6 && (poly.exponent.unwrap() - 1.0).abs() < 0.1;
    pass &= params_ok;
    lines.push(format!("geometric lambda {:.9}, polynomial gamma {:.4}", geo.rate, poly.exponent.unwrap()));
    report("rate-shape discrimination (4x4)", pass, lines.join("; "));
    assert!(pass);
}

#[test]
fn var_cvar_oracle() {
    let model = SgldVarModel::new(1e-3, 1e-2, 0.95).unwrap();
    let env = EnvironmentSpec::iid_gaussian(1, 0.0, 1.0).unwrap();
    let steps = 1_000_000;
    let rows = run_sgld_risk(model, &env, 0.0, steps, &[steps], RngStream::new(808, 0)).unwrap();
    let est = rows[0].estimate;
    let (var_exact, cvar_exact) = (1.6448536269514722, 2.0627128075074257);
    let pass = (est.var - var_exact).abs() <= 0.15 && (est.cvar - cvar_exact).abs() <= 0.20;
    report(
        "VaR/CVaR oracle",
        pass,
        format!(
            "VaR {:.4} (oracle {var_exact:.4}, tol 0.15), CVaR {:.4} (oracle {cvar_exact:.4}, tol 0.20), regularization shift {:.2e}",
            est.var, est.cvar, est.regularization_shift
        ),
    );
    assert!(pass);
}

fn env_ensemble(env: &EnvironmentSpec, series: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..series as u64).map(|i| env.generate(0, len, &mut RngStream::new(seed, i).rng()).component(0)).collect()
}

#[test]
fn mixing_estimator_sanity() {
    let class = EventClass::default();
    let iid = EnvironmentSpec::iid_gaussian(1, 0.0, 1.0).unwrap();
    let lags: Vec<usize> = (1..=20).collect();
    let ens = env_ensemble(&iid, 100, 4000, 909);
    let (_, est) = mixing_curve(&ens, &lags, &class, RngStream::new(910, 0)).unwrap();
    let worst = est.iter().map(|m| m.excess().abs() / m.std_error).fold(0.0, f64::max);
    let iid_ok = est.iter().all(|m| m.excess().abs() <= 4.0 * m.std_error);

    let ar = EnvironmentSpec::gaussian_ar1(0.9, (1.0f64 - 0.81).sqrt()).unwrap();
    let lags: Vec<usize> = (1..=50).collect();
    let slope = |seed: u64| {
        let ens = env_ensemble(&ar, 100, 4000, seed);
        let (curve, _) = mixing_curve(&ens, &lags, &class, RngStream::new(seed + 1, 0)).unwrap();
        rate_fit(&curve, RateTemplate::Geometric).unwrap().rate.ln()
    };
    let (s1, s2) = (slope(911), slope(913));
    let rel = (s1 - s2).abs() / s1.abs().max(s2.abs());
    let ar_ok = s1 < 0.0 && s2 < 0.0 && rel <= 0.25;
    let pass = iid_ok && ar_ok;
    report(
        "mixing estimator sanity",
        pass,
        format!("iid: max |excess|/SE = {worst:.2} (limit 4); AR(1) phi=0.9 geometric log-rates {s1:.4}, {s2:.4}, relative difference {rel:.3} (limit 0.25)"),
    );
    assert!(pass);
}

#[test]
fn quenched_coalescence() {
    let m = models::additive_gaussian().unwrap();
    let block = derive_constants(m.chain.contraction, m.minor.k).unwrap().block;
    let n = 50 * block;
    let rows = coupling_campaign(
        &m.chain,
        &m.minor,
        &m.env,
        (&[-10.0], &[10.0]),
        &[n],
        1000,
        Direction::Backward,
        RngStream::new(1001, 0),
    )
    .unwrap();
    let met = 1.0 - rows[0].failure_rate;
    let pass = met >= 0.99;
    report("quenched coalescence", pass, format!("met fraction {met:.4} by n = 50 N = {n} (limit 0.99)"));
    assert!(pass);
}

#[test]
fn subordinate_norm_below_one() {
    let jordan = DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.9]);
    let value = subordinate_norm(&jordan).unwrap().value;
    let mut rng = RngStream::new(1102, 0).rng();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for i in 0..100 {
        let d = 2 + i % 5;
        let raw = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let target: f64 = rng.random_range(0.05..0.99);
        let a = &raw * (target / spectral_radius(&raw));
        let norm = subordinate_norm(&a).unwrap();
        let induced = norm.norm.operator_norm(&a);
        worst = worst.max(induced);
        if !(induced < 1.0 && norm.value < 1.0) {
            failures += 1;
        }
    }
    let pass = value <= 0.95 && failures == 0;
    report(
        "subordinate norm",
        pass,
        format!("Jordan block norm {value:.5} (limit 0.95); random matrices: {failures}/100 with norm >= 1, largest {worst:.5}"),
    );
    assert!(pass);
}
