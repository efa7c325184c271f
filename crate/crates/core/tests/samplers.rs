use gibbs_frag::eppf::*;
use gibbs_frag::partitions::{Composition, SetPartition};
use gibbs_frag::quad::{integrate_positive, QuadOptions};
use gibbs_frag::samplers::*;
use gibbs_frag::special_fn::{ml_function, stable_cdf, StableIndex};
use gibbs_frag::verify::stats::{cdf_at_sorted, ks_from_sorted_cdf, ks_one_sample, ks_two_sample, MeanEstimate};
use gibbs_frag::verify::{chi_square_block_counts, chi_square_vs_eppf};
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

fn idx(a: f64) -> StableIndex {
    StableIndex::new(a).unwrap()
}

// T_{1/2} is distributed as 1/(2 G^2): Levy law with scale 1/2
fn levy_half_pdf(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (-0.25 / t).exp() * t.powf(-1.5) / (2.0 * std::f64::consts::PI.sqrt())
}

fn levy_half_cdf(t: f64) -> f64 {
    libm::erfc(0.5 / t.sqrt())
}

fn sorted(mut x: Vec<f64>) -> Vec<f64> {
    x.sort_by(f64::total_cmp);
    x
}

#[test]
fn stable_laplace_transform() {
    for &(a, lam) in &[(0.3, 1.0), (0.5, 1.0), (0.7, 1.0), (0.7, 2.0)] {
        let mut rng = RngStream::new(1, (a * 10.0) as u64);
        let x: Vec<f64> = (0..1_000_000).map(|_| (-lam * sample_stable(idx(a), &mut rng)).exp()).collect();
        let m = MeanEstimate::of(&x);
        let target = (-f64::powf(lam, a)).exp();
        assert!(m.z_score(target) < 3.0, "a={a} lam={lam}: {} +- {} vs {target}", m.mean, m.se);
    }
}

#[test]
fn stable_half_matches_levy_law() {
    let mut rng = RngStream::new(2, 0);
    let x: Vec<f64> = (0..100_000).map(|_| sample_stable(idx(0.5), &mut rng)).collect();
    let r = ks_one_sample(&x, |t| Ok(levy_half_cdf(t))).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
    // the scale 1/4 law is visibly different
    let wrong = ks_one_sample(&x, |t| Ok(libm::erfc(0.5 / (2.0 * t).sqrt()))).unwrap();
    assert!(wrong.p_value < 1e-6);
}

#[test]
fn stable_matches_density_cdf() {
    let mut rng = RngStream::new(3, 0);
    let x: Vec<f64> = (0..20_000).map(|_| sample_stable(idx(0.7), &mut rng)).collect();
    let r = ks_one_sample(&x, |t| stable_cdf(idx(0.7), t)).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn samplers_are_deterministic() {
    let run = || {
        let mut rng = RngStream::new(99, 5);
        let s = sample_stable(idx(0.4), &mut rng);
        let g = sample_gem(idx(0.5), 0.5, 50, &mut rng).unwrap();
        let ml = sample_ml(idx(0.6), -0.2, &mut rng).unwrap();
        let gg = sample_gg_inverse_lt(idx(0.5), 3.0, 1, &mut rng).unwrap();
        let p = sample_eppf_partition(&TwoParamPd::new(idx(0.5), 1.0).unwrap(), 6, &mut rng).unwrap();
        (s, g, ml, gg, p)
    };
    assert_eq!(run(), run());
}

#[test]
fn gem_first_stick_and_tail() {
    let mut rng = RngStream::new(4, 0);
    let (a, th) = (0.5, 0.5);
    let first: Vec<f64> = (0..100_000).map(|_| gem_sticks(a, th, 1, &mut rng).unwrap().0[0]).collect();
    let m = MeanEstimate::of(&first);
    assert!(m.z_score(1.0 / 3.0) < 3.0, "{m:?}");

    // E[prod (1 - R_k)] = prod (theta + k a) / (1 + theta + (k - 1) a)
    let count = 2000;
    let expected: f64 = (1..=count).map(|k| (k as f64 * 0.5).ln() - (1.0 + (k - 1) as f64 * 0.5).ln()).sum::<f64>().exp();
    let tails: Vec<f64> = (0..4000).map(|_| gem_sticks(0.5, 0.0, count, &mut rng).unwrap().1).collect();
    let m = MeanEstimate::of(&tails);
    assert!(m.z_score(expected) < 3.0, "{m:?} vs {expected}");

    let g = sample_gem(idx(0.5), 0.0, count, &mut rng).unwrap();
    assert!(g.weights().windows(2).all(|w| w[0] >= w[1]));
}

fn partitions(eppf: &dyn Eppf, n: usize, draws: usize, seed: u64) -> Vec<SetPartition> {
    let mut rng = RngStream::new(seed, 0);
    (0..draws).map(|_| sample_eppf_partition(eppf, n, &mut rng).unwrap()).collect()
}

#[test]
fn sequential_sampler_pd_half() {
    let pd = TwoParamPd::new(idx(0.5), 0.0).unwrap();
    let s = partitions(&pd, 3, 100_000, 5);
    let r = chi_square_vs_eppf(&s, &pd, 3).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
    let one = partitions(&pd, 1, 10, 5);
    assert!(one.iter().all(|p| *p == SetPartition::one_block(1).unwrap()));
}

#[test]
fn sequential_sampler_frag_cond() {
    let (a, b, y) = (idx(0.8), idx(0.4), 1.0);
    let w = GibbsWeights::frag_cond(a, b, y, 4).unwrap();
    for c in [vec![4], vec![2, 2], vec![2, 1, 1], vec![1, 1, 1, 1]] {
        let c = Composition::new(c).unwrap();
        let x = frag_cond_eppf(a, b, y, &c).unwrap();
        assert!((w.prob(&c).unwrap() / x - 1.0).abs() < 1e-10);
    }
    let s = partitions(&w, 4, 100_000, 6);
    let r = chi_square_vs_eppf(&s, &w, 4).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
    // the evaluator applied directly, on fewer draws
    let direct = FnEppf(move |c: &Composition| frag_cond_eppf(a, b, y, c));
    let s = partitions(&direct, 4, 3000, 7);
    let r = chi_square_vs_eppf(&s, &direct, 4).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn sequential_sampler_exact_for_every_evaluator() {
    let b = idx(0.4);
    let a = idx(0.8);
    let gg = GibbsWeights::from_tilt(&TiltFunction::gg_zeta(b, 1.0, 0).unwrap(), 5).unwrap();
    let mut evals: Vec<(String, Box<dyn Eppf>)> = vec![];
    for th in [-0.1, 0.0, 0.5, 2.0] {
        evals.push((format!("pd {th}"), Box::new(TwoParamPd::new(b, th).unwrap())));
    }
    evals.push(("gg".into(), Box::new(gg.clone())));
    evals.push(("ml".into(), Box::new(GibbsWeights::from_tilt(&TiltFunction::ml_lambda(b, 1.0).unwrap(), 5).unwrap())));
    evals.push(("cond".into(), Box::new(GibbsWeights::cond(b, 0.8, 5).unwrap())));
    evals.push(("frag_cond".into(), Box::new(GibbsWeights::frag_cond(a, b, 0.8, 5).unwrap())));
    evals.push(("frag".into(), Box::new(GibbsWeights::frag(a, &gg).unwrap())));
    for (i, (name, e)) in evals.iter().enumerate() {
        let s = partitions(e.as_ref(), 5, 100_000, 100 + i as u64);
        let r = chi_square_vs_eppf(&s, e.as_ref(), 5).unwrap();
        assert!(r.p_value > 0.001, "{name}: {r:?}");
    }
}

#[test]
fn pd0_given_blocks_matches_conditioned_eppf() {
    let a = idx(0.6);
    let n = 5;
    let mut rng = RngStream::new(8, 0);
    for k in 1..=n {
        let s: Vec<SetPartition> = (0..30_000).map(|_| sample_pd0_given_blocks(a, n, k, &mut rng).unwrap()).collect();
        assert!(s.iter().all(|p| p.k() == k));
        if k == 1 || k == n {
            continue;
        }
        let pk = blocks_pmf(a, n, k).unwrap();
        let cond = FnEppf(move |c: &Composition| Ok(if c.k() == k { pd_eppf(a, 0.0, c)? / pk } else { 0.0 }));
        let r = chi_square_vs_eppf(&s, &cond, n).unwrap();
        assert!(r.p_value > 0.001, "k={k}: {r:?}");
    }
}

#[test]
fn cond_partition_sampler_matches_cond_eppf() {
    let (b, y) = (idx(0.5), 1.3);
    let w = GibbsWeights::cond(b, y, 4).unwrap();
    let row: Vec<f64> = (0..=4).map(|k| if k == 0 { 0.0 } else { w.psi(4, k).unwrap() }).collect();
    let mut rng = RngStream::new(9, 0);
    let s: Vec<SetPartition> = (0..100_000).map(|_| sample_gibbs_partition(b, &row, 4, &mut rng).unwrap()).collect();
    let eppf = FnEppf(move |c: &Composition| cond_eppf(b, y, c));
    let r = chi_square_vs_eppf(&s, &eppf, 4).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
    let s: Vec<SetPartition> = (0..4000).map(|_| sample_cond_partition(b, y, 4, &mut rng).unwrap()).collect();
    let r = chi_square_vs_eppf(&s, &eppf, 4).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn paint_box_of_gem_is_pd() {
    let (a, th) = (idx(0.5), 0.7);
    let pd = TwoParamPd::new(a, th).unwrap();
    let mut rng = RngStream::new(10, 0);
    let s: Vec<SetPartition> = (0..40_000)
        .map(|_| {
            let m = sample_gem(a, th, 500, &mut rng).unwrap();
            // paint-box reads the masses in any order; ranking does not change the law
            paint_box(m.weights(), 4, &mut rng).unwrap()
        })
        .collect();
    let r = chi_square_vs_eppf(&s, &pd, 4).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn jump_series_total_matches_cms() {
    let a = idx(0.5);
    let mut rng = RngStream::new(11, 0);
    let mut totals = Vec::new();
    for _ in 0..10_000 {
        let j = sample_stable_jumps(a, 10_000, &mut rng).unwrap();
        assert!(j.jumps.windows(2).all(|w| w[0] > w[1]));
        totals.push(j.total);
    }
    let cms: Vec<f64> = (0..10_000).map(|_| sample_stable(a, &mut rng)).collect();
    let r = ks_two_sample(&totals, &cms).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn jump_series_tail_is_small_for_moderate_index() {
    for &a in &[0.3, 0.5, 0.6] {
        let mut rng = RngStream::new(12, (a * 10.0) as u64);
        for _ in 0..200 {
            let j = sample_stable_jumps(idx(a), 10_000, &mut rng).unwrap();
            assert!(j.tail / j.total <= 0.01, "a={a}: {}", j.tail / j.total);
        }
    }
}

#[test]
fn normalized_first_jump_matches_gem_maximum() {
    let a = idx(0.5);
    let mut rng = RngStream::new(13, 0);
    let jumps: Vec<f64> = (0..20_000).map(|_| sample_stable_jumps(a, 2000, &mut rng).unwrap().normalized().unwrap().weights()[0]).collect();
    let gem: Vec<f64> = (0..20_000).map(|_| sample_gem(a, 0.0, 2000, &mut rng).unwrap().weights()[0]).collect();
    let (x, y) = (MeanEstimate::of(&jumps), MeanEstimate::of(&gem));
    let z = (x.mean - y.mean).abs() / (x.se * x.se + y.se * y.se).sqrt();
    assert!(z < 3.0, "{x:?} vs {y:?}");
}

// E_{1/2}(-lambda) = exp(lambda^2) erfc(lambda)
fn ml_half(lam: f64) -> f64 {
    (lam * lam).exp() * libm::erfc(lam)
}

#[test]
fn pk_tilted_unit_accepts_everything() {
    let b = idx(0.5);
    let mut r1 = RngStream::new(14, 0);
    let mut r2 = RngStream::new(14, 0);
    let (m, t) = sample_pk_tilted(b, &TiltFunction::unit(b), 100, &mut r1).unwrap();
    let j = sample_stable_jumps(b, 100, &mut r2).unwrap();
    assert_eq!(t, j.total);
    assert_eq!(m, j.normalized().unwrap());
}

#[test]
fn pk_tilted_totals_follow_tilted_densities() {
    let b = idx(0.5);
    assert!((ml_function(b, 1.0).unwrap() / ml_half(1.0) - 1.0).abs() < 1e-10);
    let cases: Vec<(TiltFunction, Box<dyn Fn(f64) -> f64>)> = vec![
        (
            TiltFunction::ml_lambda(b, 1.0).unwrap(),
            Box::new(|t: f64| (-1.0 / t.sqrt()).exp() / ml_half(1.0) * levy_half_pdf(t)),
        ),
        (
            TiltFunction::gg_zeta(b, 1.0, 0).unwrap(),
            Box::new(|t: f64| (1.0 - t).exp() * levy_half_pdf(t)),
        ),
    ];
    for (i, (h, dens)) in cases.iter().enumerate() {
        let mut rng = RngStream::new(15, i as u64);
        let x: Vec<f64> = (0..3000).map(|_| sample_pk_tilted(b, h, 5000, &mut rng).unwrap().1).collect();
        let x = sorted(x);
        let cdf = cdf_at_sorted(dens, &x).unwrap();
        let r = ks_from_sorted_cdf(&cdf).unwrap();
        assert!(r.p_value > 0.01, "{h}: {r:?}");
    }
}

#[test]
fn pk_tilted_refuses_low_acceptance() {
    let b = idx(0.5);
    let h = TiltFunction::gg_zeta(b, 12.0, 0).unwrap();
    let mut rng = RngStream::new(0, 0);
    assert!(matches!(sample_pk_tilted(b, &h, 10, &mut rng), Err(gibbs_frag::Error::Efficiency(_))));
    assert!(sample_pk_tilted(idx(0.4), &TiltFunction::unit(b), 10, &mut rng).is_err());
}

#[test]
fn gg_inverse_local_time_m0_density() {
    let (b, zeta) = (idx(0.5), 0.8);
    let mut rng = RngStream::new(16, 0);
    let x = sorted((0..20_000).map(|_| sample_gg_inverse_lt(b, zeta, 0, &mut rng).unwrap()).collect());
    let r = zeta.powi(2);
    let cdf = cdf_at_sorted(|t| (zeta - r * t).exp() * levy_half_pdf(t), &x).unwrap();
    let res = ks_from_sorted_cdf(&cdf).unwrap();
    assert!(res.p_value > 0.01, "{res:?}");

    let small: Vec<f64> = (0..20_000).map(|_| sample_gg_inverse_lt(b, 1e-4, 0, &mut rng).unwrap()).collect();
    let plain: Vec<f64> = (0..20_000).map(|_| sample_stable(b, &mut rng)).collect();
    let res = ks_two_sample(&small, &plain).unwrap();
    assert!(res.p_value > 0.01, "{res:?}");
}

#[test]
fn gg_inverse_local_time_laplace_transforms() {
    // E exp(-l T) = ((r + l) / r)^{m (b - 1)} exp(-((r + l)^b - zeta)), r = zeta^{1/b};
    // zeta = 40 exercises the split into unit pieces
    for &(b, zeta, m) in &[(0.7, 0.5, 0u8), (0.7, 40.0, 0), (0.3, 3.0, 0), (0.7, 0.5, 1), (0.5, 40.0, 1), (0.3, 2.0, 1)] {
        let r = f64::powf(zeta, 1.0 / b);
        let lam = r;
        let mut rng = RngStream::new(17, (zeta * 10.0) as u64 + m as u64);
        let x: Vec<f64> = (0..40_000).map(|_| (-lam * sample_gg_inverse_lt(idx(b), zeta, m, &mut rng).unwrap()).exp()).collect();
        let target = (m as f64 * (b - 1.0) * ((r + lam) / r).ln() - (f64::powf(r + lam, b) - zeta)).exp();
        let est = MeanEstimate::of(&x);
        assert!(est.z_score(target) < 3.5, "b={b} zeta={zeta} m={m}: {est:?} vs {target}");
    }
}

#[test]
fn gg_inverse_local_time_m1_mean() {
    let (b, zeta) = (idx(0.5), 1.0);
    let h = TiltFunction::gg_zeta(b, zeta, 1).unwrap();
    let mean = integrate_positive(|t| t * h.eval(t) * levy_half_pdf(t), &QuadOptions::default()).unwrap();
    let mut rng = RngStream::new(18, 0);
    let x: Vec<f64> = (0..100_000).map(|_| sample_gg_inverse_lt(b, zeta, 1, &mut rng).unwrap()).collect();
    let est = MeanEstimate::of(&x);
    assert!(est.z_score(mean) < 3.0, "{est:?} vs {mean}");
}

// E[Z^p] = Gamma(1 + theta/a + p) Gamma(1 + theta) / (Gamma(1 + theta + a p) Gamma(1 + theta/a))
fn ml_moment(a: f64, th: f64, p: f64) -> f64 {
    (ln_gamma(1.0 + th / a + p) + ln_gamma(1.0 + th) - ln_gamma(1.0 + th + a * p) - ln_gamma(1.0 + th / a)).exp()
}

#[test]
fn mittag_leffler_moments() {
    for &(a, th) in &[(0.3, -0.2), (0.3, 0.0), (0.6, -0.5), (0.6, 0.5), (0.6, 2.0), (0.8, 0.1)] {
        let mut rng = RngStream::new(19, (10.0 * a + 100.0 * th + 1000.0) as u64);
        let z: Vec<f64> = (0..60_000).map(|_| sample_ml(idx(a), th, &mut rng).unwrap()).collect();
        for p in [1.0, 2.0] {
            let x: Vec<f64> = z.iter().map(|v| v.powf(p)).collect();
            let est = MeanEstimate::of(&x);
            let target = ml_moment(a, th, p);
            assert!(est.z_score(target) < 3.5, "a={a} th={th} p={p}: {est:?} vs {target}");
        }
    }
    let mut rng = RngStream::new(0, 0);
    assert!(sample_ml(idx(0.5), -0.5, &mut rng).is_err());
}

#[test]
fn block_counts_of_pd_samples() {
    let a = idx(0.7);
    let pd = TwoParamPd::new(a, 0.0).unwrap();
    let s = partitions(&pd, 8, 50_000, 20);
    let pmf = &blocks_pmf_table(a, 8)[8];
    let r = chi_square_block_counts(&s, pmf).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
    let r = chi_square_vs_eppf(&s, &pd, 8).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paint_box_partitions_all_items(seed in any::<u64>(), n in 1usize..40, k in 1usize..20) {
        let mut rng = RngStream::new(seed, 0);
        let w = vec![0.9 / k as f64; k];
        let p = paint_box(&w, n, &mut rng).unwrap();
        prop_assert_eq!(p.n(), n);
    }

    #[test]
    fn conditioned_sampler_hits_requested_count(seed in any::<u64>(), n in 1usize..30, frac in 0.0f64..1.0, a in 0.05f64..0.95) {
        let k = 1 + ((n - 1) as f64 * frac) as usize;
        let mut rng = RngStream::new(seed, 1);
        let p = sample_pd0_given_blocks(idx(a), n, k, &mut rng).unwrap();
        prop_assert_eq!(p.k(), k);
        prop_assert_eq!(p.n(), n);
    }

    #[test]
    fn gem_masses_sum_to_one(seed in any::<u64>(), a in 0.05f64..0.95, th in 0.0f64..5.0, count in 1usize..300) {
        let mut rng = RngStream::new(seed, 2);
        let m = sample_gem(idx(a), th, count, &mut rng).unwrap();
        let s: f64 = m.weights().iter().sum::<f64>() + m.tail();
        prop_assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn same_stream_same_draws(seed in any::<u64>(), stream in any::<u64>()) {
        let mut x = RngStream::new(seed, stream);
        let mut y = RngStream::new(seed, stream);
        for _ in 0..4 {
            prop_assert_eq!(sample_stable(idx(0.35), &mut x).to_bits(), sample_stable(idx(0.35), &mut y).to_bits());
        }
    }
}
