use gibbs_frag::eppf::*;
use gibbs_frag::partitions::{enumerate_set_partitions, integer_partitions, Composition, SetPartition};
use gibbs_frag::quad::{integrate_positive, QuadOptions};
use gibbs_frag::special_fn::{gen_stirling, hermite_fn, stable_pdf, StableIndex};
use gibbs_frag::tilt::TiltFunction;
use proptest::prelude::*;
use statrs::function::gamma::{gamma, ln_gamma};

fn idx(a: f64) -> StableIndex {
    StableIndex::new(a).unwrap()
}

fn comp(s: &[usize]) -> Composition {
    Composition::new(s.to_vec()).unwrap()
}

fn total_over_partitions(n: usize, f: impl Fn(&Composition) -> f64) -> f64 {
    // sum over integer partitions weighted by the number of set partitions of each shape
    integer_partitions(n).unwrap().iter().map(|c| c.multiplicity() * f(c)).sum()
}

fn total_by_enumeration(n: usize, f: impl Fn(&Composition) -> f64) -> f64 {
    enumerate_set_partitions(n).unwrap().iter().map(|p| f(&p.composition())).sum()
}

#[test]
fn pd_eppf_sums_to_one() {
    for &(a, th) in &[(0.3, -0.075), (0.5, 0.0), (0.7, 0.5), (0.2, 2.0)] {
        for n in 1..=6 {
            let s = total_by_enumeration(n, |c| pd_eppf(idx(a), th, c).unwrap());
            assert!((s - 1.0).abs() < 1e-12, "a={a} th={th} n={n}: {s}");
        }
    }
}

#[test]
fn blocks_pmf_matches_stirling_formula() {
    for &a in &[0.25, 0.5, 0.7] {
        for n in 1..=20 {
            for k in 1..=n {
                let s = gen_stirling(idx(a), n, k).unwrap();
                let e = ((k as f64 - 1.0) * f64::ln(a) + ln_gamma(k as f64) - ln_gamma(n as f64)).exp() * s;
                let p = blocks_pmf(idx(a), n, k).unwrap();
                assert!((p - e).abs() <= 1e-12 * e.max(1e-300) + 1e-300, "a={a} n={n} k={k}: {p} vs {e}");
            }
        }
    }
    let s: f64 = (1..=6).map(|k| blocks_pmf(idx(0.7), 6, k).unwrap()).sum();
    assert!((s - 1.0).abs() < 1e-10);
}

#[test]
fn blocks_pmf_matches_enumeration() {
    let a = idx(0.5);
    for k in 1..=3 {
        let e: f64 = enumerate_set_partitions(3)
            .unwrap()
            .iter()
            .filter(|p| p.k() == k)
            .map(|p| pd_eppf(a, 0.0, &p.composition()).unwrap())
            .sum();
        assert!((blocks_pmf(a, 3, k).unwrap() - e).abs() < 1e-15);
    }
}

#[test]
fn half_closed_form_agrees() {
    for k in 1..=30 {
        for j in 1..=k {
            let x = blocks_pmf_half(k, j).unwrap();
            let y = blocks_pmf(idx(0.5), k, j).unwrap();
            assert!((x - y).abs() < 1e-12, "k={k} j={j}");
        }
    }
}

#[test]
fn block_count_composition_identity() {
    for &(a, b) in &[(0.6, 0.3), (0.8, 0.4), (0.5, 0.25)] {
        let (alpha, beta) = (idx(a), idx(b));
        let ratio = beta.ratio(alpha).unwrap();
        let ta = blocks_pmf_table(alpha, 10);
        let tr = blocks_pmf_table(ratio, 10);
        for n in 1..=10 {
            for j in 1..=n {
                let rhs: f64 = (j..=n).map(|k| ta[n][k] * tr[k][j]).sum();
                let lhs = blocks_pmf(beta, n, j).unwrap();
                assert!((lhs - rhs).abs() < 1e-8, "a={a} b={b} n={n} j={j}");
            }
        }
    }
}

#[test]
fn pitman_moment_identity() {
    for &(a, b) in &[(0.6, 0.3), (0.8, 0.4)] {
        let mix = blocks_pmf_table(idx(b / a), 10);
        for &r in &[0.5, 1.0, 2.0] {
            let th = r * b;
            for k in 1..=10 {
                let lhs: f64 = (1..=k)
                    .map(|j| mix[k][j] * (ln_gamma(r + j as f64) - ln_gamma(r + 1.0) - ln_gamma(j as f64)).exp())
                    .sum();
                let ra = th / a;
                let rhs = (ln_gamma(ra + k as f64) - ln_gamma(ra + 1.0) - ln_gamma(k as f64)).exp();
                assert!((lhs - rhs).abs() < 1e-10 * rhs, "a={a} b={b} r={r} k={k}");
            }
        }
    }
    let mix = blocks_pmf_table(idx(0.5), 2);
    assert!((mix[2][1] * 1.0 + mix[2][2] * 2.0 - 1.5).abs() < 1e-15);
    assert!((gamma(2.5) / (gamma(1.5) * gamma(2.0)) - 1.5).abs() < 1e-14);
}

#[test]
fn psi_weight_unit_and_pd() {
    let a = idx(0.6);
    let unit = TiltFunction::unit(a);
    for &(n, k) in &[(1, 1), (3, 2), (5, 1), (6, 4)] {
        assert!((psi_weight(a, &unit, n, k).unwrap() - 1.0).abs() < 1e-8, "n={n} k={k}");
    }
    let th = 0.4;
    let h = TiltFunction::pd_theta(a, th).unwrap();
    let c = comp(&[2, 1]);
    let ratio = pd_eppf(a, th, &c).unwrap() / pd_eppf(a, 0.0, &c).unwrap();
    assert!((psi_weight(a, &h, 3, 2).unwrap() - ratio).abs() < 1e-8);
    let gg = TiltFunction::gg_zeta(a, 1.0, 0).unwrap();
    assert!((psi_weight(a, &gg, 1, 1).unwrap() - 1.0).abs() < 1e-8);
    assert!(psi_weight(idx(0.5), &gg, 1, 1).is_err());
}

#[test]
fn reduced_tables_agree_with_direct_quadrature() {
    let a = idx(0.6);
    for h in [
        TiltFunction::gg_zeta(a, 1.0, 0).unwrap(),
        TiltFunction::gg_zeta(a, 0.7, 1).unwrap(),
        TiltFunction::ml_lambda(a, 1.0).unwrap(),
    ] {
        let w = GibbsWeights::from_tilt(&h, 6).unwrap();
        for &(n, k) in &[(1, 1), (2, 1), (4, 2), (6, 3), (6, 6)] {
            let d = psi_weight(a, &h, n, k).unwrap();
            let t = w.psi(n, k).unwrap();
            assert!((d / t - 1.0).abs() < 1e-7, "{h} n={n} k={k}: {d} vs {t}");
        }
    }
}

#[test]
fn gibbs_tables_are_normalized() {
    let a = idx(0.6);
    for h in [
        TiltFunction::gg_zeta(a, 1.0, 0).unwrap(),
        TiltFunction::gg_zeta(a, 3.0, 1).unwrap(),
        TiltFunction::ml_lambda(a, 2.0).unwrap(),
        TiltFunction::pd_theta(a, -0.3).unwrap(),
    ] {
        let w = GibbsWeights::from_tilt(&h, 24).unwrap();
        assert!((w.psi(1, 1).unwrap() - 1.0).abs() < 1e-9, "{h}");
        for n in 1..=24 {
            assert!(w.normalization_error(n).unwrap() < 1e-8, "{h} n={n}");
        }
    }
}

#[test]
fn gibbs_eppf_examples() {
    let a = idx(0.6);
    let unit = GibbsWeights::unit(a, 8).unwrap();
    for c in integer_partitions(5).unwrap() {
        assert_eq!(gibbs_eppf(&unit, &c).unwrap(), pd_eppf(a, 0.0, &c).unwrap());
    }
    let gg = GibbsWeights::from_tilt(&TiltFunction::gg_zeta(a, 1.0, 0).unwrap(), 5).unwrap();
    let s = total_by_enumeration(5, |c| gibbs_eppf(&gg, c).unwrap());
    assert!((s - 1.0).abs() < 1e-8, "{s}");
    let half = idx(0.5);
    let pd = GibbsWeights::pd_theta(half, 1.0, 4).unwrap();
    let c = comp(&[3, 1]);
    assert!((gibbs_eppf(&pd, &c).unwrap() - pd_eppf(half, 1.0, &c).unwrap()).abs() < 1e-10);
    assert!(gibbs_eppf(&pd, &comp(&[3, 2])).is_err());
}

// s^{k-1} H_{k+1-2n}(s) Gamma(n) 2^{n-1} / Gamma(k) p_{1/2}(c)
fn hermite_eppf(s: f64, c: &Composition) -> f64 {
    let (n, k) = (c.n() as f64, c.k() as f64);
    let q = n - 0.5 * (k + 1.0);
    s.powf(k - 1.0) * hermite_fn(q, s).unwrap() * gamma(n) * 2f64.powf(n - 1.0) / gamma(k)
        * pd_eppf(idx(0.5), 0.0, c).unwrap()
}

#[test]
fn cond_eppf_examples() {
    let s = total_by_enumeration(4, |c| cond_eppf(idx(0.5), 1.3, c).unwrap());
    assert!((s - 1.0).abs() < 1e-6, "{s}");
    for &(n, k) in &[(3usize, 2usize), (4, 2), (2, 1)] {
        let c = comp(&{
            let mut v = vec![1; k];
            v[0] = n - k + 1;
            v
        });
        let s = 1.0;
        let y = 0.5 / (s * s);
        let lhs = cond_eppf(idx(0.5), y, &c).unwrap();
        let rhs = hermite_eppf(s, &c);
        assert!((lhs - rhs).abs() < 1e-6, "n={n} k={k}: {lhs} vs {rhs}");
    }
    // disintegration over the law of T_beta
    let b = idx(0.4);
    let c = comp(&[2, 1]);
    let opts = QuadOptions::new(1e-14, 1e-9, 4000);
    let v = integrate_positive(
        |y| {
            let f = stable_pdf(b, y).unwrap();
            if f == 0.0 {
                0.0
            } else {
                cond_eppf(b, y, &c).unwrap() * f
            }
        },
        &opts,
    )
    .unwrap();
    assert!((v - pd_eppf(b, 0.0, &c).unwrap()).abs() < 1e-6, "{v}");
}

#[test]
fn frag_cond_eppf_examples() {
    let (a, b) = (idx(0.8), idx(0.4));
    let s = total_by_enumeration(4, |c| frag_cond_eppf(a, b, 1.0, c).unwrap());
    assert!((s - 1.0).abs() < 1e-5, "{s}");
    // one block: the mixture collapses
    let c = comp(&[4]);
    let direct = cond_eppf(b, 1.0, &c).unwrap() / pd_eppf(b, 0.0, &c).unwrap() * pd_eppf(a, 0.0, &c).unwrap();
    assert!((frag_cond_eppf(a, b, 1.0, &c).unwrap() - direct).abs() < 1e-12);
    assert!(frag_cond_eppf(b, a, 1.0, &c).is_err());
}

#[test]
fn frag_cond_hermite_mixture() {
    // base index 1/2 fragmented to alpha = 0.8, mixing index 1/(2 alpha)
    let a = idx(0.8);
    let mix_idx = idx(1.0 / 1.6);
    let s: f64 = 1.0;
    let y = 0.5 / (s * s);
    for c in [comp(&[2, 1]), comp(&[1, 1, 1]), comp(&[3, 1]), comp(&[2, 2, 1])] {
        let (n, k) = (c.n(), c.k());
        let mut mix = 0.0;
        for j in 1..=k {
            let q = n as f64 - 0.5 * (j as f64 + 1.0);
            mix += blocks_pmf(mix_idx, k, j).unwrap()
                * 2f64.powi(n as i32 - 1)
                * s.powi(j as i32 - 1)
                * hermite_fn(q, s).unwrap()
                * gamma(n as f64)
                / gamma(j as f64);
        }
        let rhs = mix * pd_eppf(a, 0.0, &c).unwrap();
        let lhs = frag_cond_eppf(a, idx(0.5), y, &c).unwrap();
        assert!((lhs - rhs).abs() < 1e-6, "{c:?}: {lhs} vs {rhs}");
    }
}

#[test]
fn frag_eppf_examples() {
    let (a, b) = (idx(0.6), idx(0.3));
    let unit = GibbsWeights::unit(b, 6).unwrap();
    for c in integer_partitions(5).unwrap() {
        let v = frag_eppf(a, b, &unit, &c).unwrap();
        assert!((v - pd_eppf(a, 0.0, &c).unwrap()).abs() < 1e-14);
    }
    let pd = GibbsWeights::pd_theta(b, 0.3, 6).unwrap();
    let c = comp(&[2, 1]);
    assert!((frag_eppf(a, b, &pd, &c).unwrap() - pd_eppf(a, 0.3, &c).unwrap()).abs() < 1e-8);
    let gg = GibbsWeights::from_tilt(&TiltFunction::gg_zeta(b, 1.0, 0).unwrap(), 6).unwrap();
    let s = total_by_enumeration(5, |c| frag_eppf(a, b, &gg, c).unwrap());
    assert!((s - 1.0).abs() < 1e-6, "{s}");
    // table form agrees with the direct evaluator
    let table = GibbsWeights::frag(a, &gg).unwrap();
    for c in integer_partitions(6).unwrap() {
        assert!((gibbs_eppf(&table, &c).unwrap() - frag_eppf(a, b, &gg, &c).unwrap()).abs() < 1e-15);
    }
}

#[test]
fn cond_blocks_pmf_examples() {
    let (a, b) = (idx(0.8), idx(0.4));
    let s: f64 = (1..=5).map(|k| cond_blocks_pmf(a, b, 1.0, 5, k).unwrap()).sum();
    assert!((s - 1.0).abs() < 1e-5, "{s}");
    assert!((cond_blocks_pmf(a, b, 1.0, 1, 1).unwrap() - 1.0).abs() < 1e-15);
    for k in 1..=4 {
        let by_shape: f64 = integer_partitions(4)
            .unwrap()
            .iter()
            .filter(|c| c.k() == k)
            .map(|c| c.multiplicity() * frag_cond_eppf(a, b, 1.0, c).unwrap())
            .sum();
        assert!((by_shape - cond_blocks_pmf(a, b, 1.0, 4, k).unwrap()).abs() < 1e-12, "k={k}");
    }
}

#[test]
fn predictive_weights_examples() {
    let pd = TwoParamPd::new(idx(0.5), 0.0).unwrap();
    let one = SetPartition::one_block(1).unwrap();
    let w = predictive_weights(&pd, &one).unwrap();
    assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    let fc = FnEppf(|c: &Composition| frag_cond_eppf(idx(0.8), idx(0.4), 1.0, c));
    let p = SetPartition::new(vec![vec![1, 2], vec![3]]).unwrap();
    let w = predictive_weights(&fc, &p).unwrap();
    assert_eq!(w.len(), 3);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let gg = GibbsWeights::from_tilt(&TiltFunction::gg_zeta(idx(0.3), 2.0, 1).unwrap(), 3).unwrap();
    let w = predictive_weights(&gg, &one).unwrap();
    assert!(w.iter().all(|&x| x > 0.0));
}

fn evaluators() -> Vec<(String, Box<dyn Eppf>, f64)> {
    let a = idx(0.6);
    let b = idx(0.3);
    let gg_b = GibbsWeights::from_tilt(&TiltFunction::gg_zeta(b, 1.0, 0).unwrap(), 7).unwrap();
    vec![
        ("pd(-0.15)".into(), Box::new(TwoParamPd::new(a, -0.15).unwrap()), 1e-10),
        ("pd(0)".into(), Box::new(TwoParamPd::new(a, 0.0).unwrap()), 1e-10),
        ("pd(0.5)".into(), Box::new(TwoParamPd::new(a, 0.5).unwrap()), 1e-10),
        ("pd(2)".into(), Box::new(TwoParamPd::new(a, 2.0).unwrap()), 1e-10),
        ("gg".into(), Box::new(GibbsWeights::from_tilt(&TiltFunction::gg_zeta(a, 1.0, 0).unwrap(), 7).unwrap()), 1e-6),
        ("ml".into(), Box::new(GibbsWeights::from_tilt(&TiltFunction::ml_lambda(a, 1.0).unwrap(), 7).unwrap()), 1e-6),
        ("cond".into(), Box::new(FnEppf(|c: &Composition| cond_eppf(idx(0.5), 1.3, c))), 1e-6),
        ("frag_cond".into(), Box::new(FnEppf(|c: &Composition| frag_cond_eppf(idx(0.8), idx(0.4), 1.0, c))), 1e-6),
        ("frag".into(), Box::new(FnEppf(move |c: &Composition| frag_eppf(a, b, &gg_b, c))), 1e-6),
    ]
}

#[test]
fn every_evaluator_normalizes() {
    for (name, e, tol) in evaluators() {
        for n in 1..=6 {
            let s = total_by_enumeration(n, |c| e.prob(c).unwrap());
            assert!((s - 1.0).abs() < tol, "{name} n={n}: {s}");
        }
    }
}

#[test]
fn every_evaluator_is_consistent() {
    for (name, e, _) in evaluators() {
        for n in 1..=5 {
            for c in integer_partitions(n).unwrap() {
                let w = e.predictive(c.sizes()).unwrap();
                let s: f64 = w.iter().sum();
                assert!((s - 1.0).abs() < 1e-8, "{name} {c:?}: {s}");
            }
        }
    }
}

#[test]
fn evaluators_are_symmetric() {
    let c1 = comp(&[3, 1, 2]);
    let c2 = comp(&[1, 2, 3]);
    for (name, e, _) in evaluators() {
        assert_eq!(e.prob(&c1).unwrap(), e.prob(&c2).unwrap(), "{name}");
    }
    // the shape-weighted sum agrees with the direct enumeration
    let pd = TwoParamPd::new(idx(0.35), 0.4).unwrap();
    let a = total_over_partitions(7, |c| pd.prob(c).unwrap());
    assert!((a - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn pd_symmetry_and_addition_rule(
        a in 0.05f64..0.95,
        t in 0.0f64..5.0,
        sizes in proptest::collection::vec(1usize..5, 1..5),
        seed in 0usize..100,
    ) {
        let alpha = idx(a);
        let theta = -a + 1e-3 + t;
        let c = Composition::new(sizes.clone()).unwrap();
        let mut perm = sizes.clone();
        perm.rotate_left(seed % sizes.len());
        prop_assert_eq!(pd_eppf(alpha, theta, &c).unwrap(), pd_eppf(alpha, theta, &Composition::new(perm).unwrap()).unwrap());
        let base = pd_eppf(alpha, theta, &c).unwrap();
        let mut total = 0.0;
        for j in 0..sizes.len() {
            let mut g = sizes.clone();
            g[j] += 1;
            total += pd_eppf(alpha, theta, &Composition::new(g).unwrap()).unwrap();
        }
        let mut g = sizes.clone();
        g.push(1);
        total += pd_eppf(alpha, theta, &Composition::new(g).unwrap()).unwrap();
        prop_assert!((total / base - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blocks_rows_sum_to_one(a in 0.01f64..0.99, n in 1usize..120) {
        let t = blocks_pmf_table(idx(a), n);
        let s: f64 = t[n].iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!(t[n].iter().all(|&p| p >= 0.0));
    }
}
