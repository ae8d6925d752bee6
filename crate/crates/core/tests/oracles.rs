//! Statistical checks against exact answers computed independently here.

use chase_escape::analytics::{closed_node_prob, open_node_lower_bound, reflection_decay, tree_critical_rate};
use chase_escape::dynamics::{run, DynamicState, OutcomeClass, RateParams, StopPolicy, Transition};
use chase_escape::geometry::{
    build_gilbert, sample_ppp, thin_marks, BoxSpec, GilbertGraph, Mark, PointConfiguration, PointSet,
};
use chase_escape::reference_models::{
    chain_reach_prob, chain_survival_oracle, simulate_chain, simulate_tree, simulate_tree_eager, ChainConfig,
    ChainNetwork, TreeConfig,
};
use chase_escape::stream::{stream, CellKey, SimRng};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Exp, Poisson};

fn within(estimate: f64, stderr: f64, truth: f64, k: f64) -> bool {
    (estimate - truth).abs() <= k * stderr.max(1e-12)
}

fn proportion(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Kolmogorov–Smirnov statistic of `samples` against `cdf`.
fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// 1-d graph with nodes at `xs`; `xs[origin]` must be 0.
fn line_graph(xs: &[f64], marks: &[Mark], origin: usize, r: f64, side: f64) -> GilbertGraph {
    let b = BoxSpec::bounded(1, side).unwrap();
    let config = PointConfiguration::new(PointSet::new(b, xs.to_vec()).unwrap(), marks.to_vec(), origin).unwrap();
    build_gilbert(config, r).unwrap()
}

/// Infected centre at the origin with `k` knight and `n` susceptible leaves
/// on a circle of radius 1; leaves are pairwise farther apart than r = 1.
fn star_graph(k: usize, n: usize) -> GilbertGraph {
    let b = BoxSpec::bounded(2, 10.0).unwrap();
    let leaves = k + n;
    assert!(leaves <= 5, "leaves closer than 72 degrees would be linked");
    let mut coords = vec![0.0, 0.0];
    let mut marks = vec![Mark::Susceptible];
    for j in 0..leaves {
        let a = std::f64::consts::TAU * j as f64 / leaves as f64;
        coords.extend([a.cos(), a.sin()]);
        marks.push(if j < k { Mark::WhiteKnight } else { Mark::Susceptible });
    }
    let g = build_gilbert(PointConfiguration::new(PointSet::new(b, coords).unwrap(), marks, 0).unwrap(), 1.0).unwrap();
    assert!((1..=leaves).all(|v| g.neighbors(v) == [0]));
    g
}

fn wis_path() -> GilbertGraph {
    line_graph(&[-1.0, 0.0, 1.0], &[Mark::WhiteKnight, Mark::Susceptible, Mark::Susceptible], 1, 1.0, 10.0)
}

#[test]
fn poisson_counts_and_uniform_positions() {
    let b = BoxSpec::bounded(2, 4.0).unwrap();
    let mu = 1.25; // mean count 20
    let mean = mu * b.volume();
    let reps = 4000;
    let mut rng = SimRng::seed_from_u64(11);
    let mut counts = Vec::with_capacity(reps);
    let mut xs = Vec::new();
    for _ in 0..reps {
        let p = sample_ppp(mu, &b, &mut rng).unwrap();
        counts.push(p.len() as f64);
        if xs.len() < 20_000 {
            xs.extend((0..p.len()).map(|i| p.position(i)[0]));
        }
    }
    let m = counts.iter().sum::<f64>() / reps as f64;
    let var = counts.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
    assert!(within(m, (mean / reps as f64).sqrt(), mean, 3.0), "mean {m}");
    // var/mean of a Poisson count is 1; its standard error is about sqrt(2/reps)
    assert!((var / m - 1.0).abs() < 3.0 * (2.0 / reps as f64).sqrt(), "dispersion {}", var / m);

    // chi-square goodness of fit with tails pooled
    let pois = Poisson::new(mean).unwrap();
    let (lo, hi) = (12u64, 28u64);
    let mut observed = vec![0f64; (hi - lo + 3) as usize];
    for &c in &counts {
        let c = c as u64;
        let bin = if c < lo { 0 } else if c > hi { observed.len() - 1 } else { (c - lo + 1) as usize };
        observed[bin] += 1.0;
    }
    let mut expected = vec![0f64; observed.len()];
    expected[0] = (0..lo).map(|c| pois.pmf(c)).sum::<f64>();
    for c in lo..=hi {
        expected[(c - lo + 1) as usize] = pois.pmf(c);
    }
    let last = expected.len() - 1;
    expected[last] = 1.0 - expected[..last].iter().sum::<f64>();
    let chi2: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e * reps as f64).powi(2) / (e * reps as f64)).sum();
    let p_value = 1.0 - ChiSquared::new((observed.len() - 1) as f64).unwrap().cdf(chi2);
    assert!(p_value > 1e-3, "chi2 = {chi2}, p = {p_value}");

    let ks = ks_statistic(xs.clone(), |x| ((x + 2.0) / 4.0).clamp(0.0, 1.0));
    assert!(ks < 1.63 / (xs.len() as f64).sqrt(), "ks = {ks}");
}

#[test]
fn thinning_is_binomial() {
    let b = BoxSpec::bounded(2, 10.0).unwrap();
    let mut rng = SimRng::seed_from_u64(3);
    let p = 0.3;
    let (mut knights, mut total) = (0usize, 0usize);
    for _ in 0..200 {
        let points = sample_ppp(2.0, &b, &mut rng).unwrap();
        let config = thin_marks(&points, p, &mut rng).unwrap();
        assert_eq!(config.mark(0), Mark::Susceptible);
        assert_eq!(config.len(), points.len() + 1);
        knights += config.knight_count();
        total += points.len();
    }
    let (est, se) = proportion(knights, total);
    assert!(within(est, se, p, 3.0), "{est} ± {se}");
}

#[test]
fn first_event_time_is_exponential() {
    let g = wis_path();
    for lambda in [0.5, 2.0] {
        let params = RateParams::with_infection_rate(lambda).unwrap();
        let samples: Vec<f64> = (0..5000)
            .map(|i| {
                let mut s = DynamicState::new(&g, params).unwrap();
                s.step(&mut stream(1, CellKey::tagged(9, 0), i)).unwrap().dt
            })
            .collect();
        let exp = Exp::new(1.0 + lambda).unwrap();
        let ks = ks_statistic(samples, |x| exp.cdf(x));
        assert!(ks < 1.63 / (5000f64).sqrt(), "lambda {lambda}: ks = {ks}");
    }
}

#[test]
fn knight_infected_susceptible_path() {
    // total ever infected is 1 if the knight moves first, else 2
    let g = wis_path();
    let policy = StopPolicy::default();
    for lambda in [0.5, 1.0, 2.0] {
        let params = RateParams::with_infection_rate(lambda).unwrap();
        let reps = 20_000;
        let mut ones = 0;
        for i in 0..reps {
            let out = run(&g, params, &policy, &mut stream(2, CellKey::from_values(lambda, 0.0), i)).unwrap();
            assert_eq!(out.class, OutcomeClass::Extinction);
            assert!(out.total_ever_infected == 1 || out.total_ever_infected == 2);
            ones += usize::from(out.total_ever_infected == 1);
        }
        let (p, se) = proportion(ones, reps as usize);
        assert!(within(p, se, 1.0 / (1.0 + lambda), 3.0), "lambda {lambda}: {p} ± {se}");
    }
}

#[test]
fn star_first_event_matches_closed_node_probability() {
    for (k, n, lambda) in [(1usize, 2usize, 1.0), (2, 3, 0.5), (3, 1, 2.0)] {
        let g = star_graph(k, n);
        assert_eq!(g.degree(0), k + n);
        let params = RateParams::with_infection_rate(lambda).unwrap();
        let reps = 20_000;
        let patched = (0..reps)
            .filter(|&i| {
                let mut s = DynamicState::new(&g, params).unwrap();
                s.step(&mut stream(3, CellKey::tagged(k as u64, n as u64), i)).unwrap().transition == Transition::Patch
            })
            .count();
        let (p, se) = proportion(patched, reps as usize);
        let exact = closed_node_prob(k as u32, n as u32, lambda).unwrap();
        assert!(within(p, se, exact, 3.0), "k={k} n={n}: {p} vs {exact}");
        // complement: the node transmits at least once first
        assert!(within(1.0 - p, se, n as f64 * lambda / (k as f64 + n as f64 * lambda), 3.0));
    }
}

#[test]
fn star_transmits_to_all_leaves_before_a_patch() {
    for (n, m, lambda) in [(2usize, 1usize, 1.0), (3, 2, 2.0)] {
        let g = star_graph(m, n);
        let params = RateParams::with_infection_rate(lambda).unwrap();
        // leaves are each other's strangers, so only the centre can be patched
        let exact: f64 = (1..=n).map(|j| j as f64 * lambda / (j as f64 * lambda + m as f64)).product();
        assert!(exact >= open_node_lower_bound(n as u32, m as u32, lambda).unwrap());
        let reps = 20_000;
        let hits = (0..reps)
            .filter(|&i| {
                let mut s = DynamicState::new(&g, params).unwrap();
                let mut rng = stream(4, CellKey::tagged(n as u64, m as u64), i);
                (0..n).all(|_| s.step(&mut rng).unwrap().transition == Transition::Infection)
            })
            .count();
        let (p, se) = proportion(hits, reps as usize);
        assert!(within(p, se, exact, 3.0), "n={n} m={m}: {p} vs {exact}");
    }
}

#[test]
fn chain_matches_the_same_chain_built_as_a_gilbert_graph() {
    let cap = 30;
    let lambda = 1.5;
    let config = ChainConfig::knight_then_infected(1, lambda, cap);
    let xs: Vec<f64> = (0..=cap).map(|s| s as f64 - 1.0).collect();
    let mut marks = vec![Mark::Susceptible; cap + 1];
    marks[0] = Mark::WhiteKnight;
    // r = 1.5 links unit neighbours only; the box keeps everything away from
    // the walls and censoring is off, so both run to absorption
    let g = line_graph(&xs, &marks, 1, 1.5, 200.0);
    let params = RateParams::with_infection_rate(lambda).unwrap();
    let policy = StopPolicy { boundary_censoring: false, ..StopPolicy::default() };
    for seed in 0..300 {
        let chain = run(ChainNetwork::new(&config).unwrap(), params, &policy, &mut SimRng::seed_from_u64(seed)).unwrap();
        let gilbert = run(&g, params, &policy, &mut SimRng::seed_from_u64(seed)).unwrap();
        assert_eq!(chain, gilbert, "seed {seed}");
    }
}

/// Probability that the gap walk started at `gap` hits `top` before 0, by a
/// dense linear solve.
fn ruin_by_linear_solve(gap: usize, lambda: f64, top: usize) -> f64 {
    let (p, q) = (lambda / (1.0 + lambda), 1.0 / (1.0 + lambda));
    let n = top + 1;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    a[(0, 0)] = 1.0;
    a[(top, top)] = 1.0;
    b[top] = 1.0;
    for g in 1..top {
        a[(g, g)] = 1.0;
        a[(g, g + 1)] = -p;
        a[(g, g - 1)] = -q;
    }
    a.lu().solve(&b).unwrap()[gap]
}

#[test]
fn chain_survival_oracle_matches_linear_solve() {
    for lambda in [1.2, 1.5, 2.0, 3.0] {
        for gap in [1u32, 2, 3, 5] {
            let exact = ruin_by_linear_solve(gap as usize, lambda, 200);
            let oracle = chain_survival_oracle(gap, lambda).unwrap();
            assert!((exact - oracle).abs() < 1e-10, "lambda {lambda} gap {gap}: {exact} vs {oracle}");
        }
    }
    assert_eq!(chain_survival_oracle(3, 0.9).unwrap(), 0.0);
}

#[test]
fn simulated_chain_survival() {
    for (gap, lambda) in [(1usize, 1.5), (3, 1.5), (2, 3.0)] {
        let config = ChainConfig::knight_then_infected(gap, lambda, 120);
        let reps = 10_000;
        let hits = (0..reps)
            .filter(|&i| {
                simulate_chain(&config, &mut stream(5, CellKey::from_values(gap as f64, lambda), i)).unwrap().class
                    == OutcomeClass::GlobalProxy
            })
            .count();
        let (p, se) = proportion(hits, reps as usize);
        let exact = chain_survival_oracle(gap as u32, lambda).unwrap();
        assert!(within(p, se, exact, 3.0), "gap {gap} lambda {lambda}: {p} vs {exact}");
    }
}

/// `f[a][g]`: probability of `n − a` more front advances before the gap
/// closes, with current gap `g`.
fn reach_by_dp(n: usize, lambda: f64) -> f64 {
    let (p, q) = (lambda / (1.0 + lambda), 1.0 / (1.0 + lambda));
    let width = n + 2;
    let mut next = vec![1.0; width + 1]; // a = n
    for _ in (0..n).rev() {
        let mut cur = vec![0.0; width + 1];
        for g in 1..width {
            cur[g] = p * next[g + 1] + q * cur[g - 1];
        }
        next = cur;
    }
    next[1]
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn chain_reach_probability() {
    let lambda = 0.5;
    // one advance needs the infection to move before the knight
    assert!((reach_by_dp(1, lambda) - 1.0 / 3.0).abs() < 1e-15);
    let exact: Vec<f64> = (1..=12).map(|n| reach_by_dp(n, lambda)).collect();
    assert!(exact.windows(2).all(|w| w[1] < w[0]));
    for n in [1usize, 2, 4, 6] {
        let est = chain_reach_prob(n, lambda, 20_000, 6).unwrap();
        assert!(within(est.estimate, est.stderr, exact[n - 1], 3.0), "n={n}: {est:?} vs {}", exact[n - 1]);
    }
    let ns: Vec<f64> = (4..=12).map(|n| n as f64).collect();
    let bound = reflection_decay(lambda).unwrap().ln() + 0.05;
    let exact_logs: Vec<f64> = (4..=12).map(|n| exact[n - 1].ln()).collect();
    assert!(slope(&ns, &exact_logs) <= bound);
    let est_logs: Vec<f64> = (4..=12)
        .map(|n| chain_reach_prob(n, lambda, 200_000, 7).unwrap().estimate.ln())
        .collect();
    assert!(est_logs.iter().all(|l| l.is_finite()));
    let s = slope(&ns, &est_logs);
    assert!(s <= bound, "slope {s} vs {bound}");
}

#[test]
fn unary_tree_is_the_chain() {
    let lambda = 1.3;
    let depth = 25;
    let tree = TreeConfig::new(1, depth, lambda);
    let chain = ChainConfig::knight_then_infected(1, lambda, depth as usize + 1);
    for seed in 0..500 {
        let a = simulate_tree(&tree, &mut SimRng::seed_from_u64(seed)).unwrap();
        let b = simulate_chain(&chain, &mut SimRng::seed_from_u64(seed)).unwrap();
        assert_eq!(a, b, "seed {seed}");
    }
}

#[test]
fn binary_tree_below_and_above_the_critical_rate() {
    let critical = tree_critical_rate(2).unwrap();
    let run_many = |lambda: f64, depth: u32, reps: u64| {
        let config = TreeConfig::new(2, depth, lambda);
        (0..reps)
            .map(|i| simulate_tree(&config, &mut stream(8, CellKey::from_values(lambda, depth as f64), i)).unwrap())
            .collect::<Vec<_>>()
    };
    let low = run_many(0.05, 30, 5000);
    assert!(0.05 < critical);
    let extinct = low.iter().filter(|o| o.class == OutcomeClass::Extinction).count();
    assert!(extinct as f64 / 5000.0 >= 0.99);
    let high = run_many(1.0, 12, 2000);
    let global = high.iter().filter(|o| o.class == OutcomeClass::GlobalProxy).count();
    assert!(global as f64 / 2000.0 > 0.2, "{global}");
    // eager and lazy trees give the same trajectories
    let config = TreeConfig::new(2, 8, 1.0);
    for seed in 0..100 {
        let mut r1 = SimRng::seed_from_u64(seed);
        let mut r2 = SimRng::seed_from_u64(seed);
        assert_eq!(simulate_tree(&config, &mut r1).unwrap(), simulate_tree_eager(&config, &mut r2).unwrap());
    }
}
