use gibbs_frag::partitions::*;
use gibbs_frag::samplers::{paint_box, sample_gem, RngStream};
use gibbs_frag::special_fn::StableIndex;
use gibbs_frag::Error;
use proptest::prelude::*;

fn sp(blocks: Vec<Vec<usize>>) -> SetPartition {
    SetPartition::new(blocks).unwrap()
}

#[test]
fn enumeration_counts_are_bell_numbers() {
    let bell = bell_numbers(10);
    assert_eq!(bell[8], 4140);
    for n in 1..=10 {
        let all = enumerate_set_partitions(n).unwrap();
        assert_eq!(all.len() as u128, bell[n], "n={n}");
        let mut dedup = all.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), all.len());
    }
    assert_eq!(enumerate_set_partitions(1).unwrap(), vec![SetPartition::one_block(1).unwrap()]);
    assert!(matches!(enumerate_set_partitions(13), Err(Error::ResourceGuard(_))));
}

#[test]
fn enumeration_is_in_restricted_growth_order() {
    let labels: Vec<Vec<usize>> = enumerate_set_partitions(5).unwrap().iter().map(|p| p.labels()).collect();
    assert!(labels.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn compositions_of_examples() {
    assert_eq!(to_composition(&sp(vec![vec![1, 3], vec![2]])).sizes(), &[2, 1]);
    assert_eq!(to_composition(&sp(vec![vec![1], vec![2], vec![3]])).sizes(), &[1, 1, 1]);
    assert_eq!(to_composition(&sp(vec![vec![1, 2, 3, 4]])).sizes(), &[4]);
}

#[test]
fn invalid_partitions_rejected() {
    assert!(SetPartition::new(vec![vec![1, 2], vec![2]]).is_err());
    assert!(SetPartition::new(vec![vec![1, 3]]).is_err());
    assert!(SetPartition::new(vec![vec![]]).is_err());
    assert!(SetPartition::from_json("[[1],[3]]").is_err());
}

#[test]
fn canonical_json_forms() {
    let p = sp(vec![vec![3, 1], vec![2]]);
    assert_eq!(p.to_json(), "[[1,3],[2]]");
    assert_eq!(SetPartition::from_json("[[2],[3,1]]").unwrap(), p);
    let m = MassPartition::new(vec![0.5, 0.25], 0.25).unwrap();
    assert_eq!(m.to_json(), r#"{"weights":[0.5,0.25],"tail":0.25}"#);
    assert_eq!(MassPartition::from_json(&m.to_json()).unwrap(), m);
    assert!(MassPartition::from_json(r#"{"weights":[0.25,0.5],"tail":0.25}"#).is_err());
}

#[test]
fn rank_masses_examples() {
    assert_eq!(rank_masses(&[0.2, 0.5, 0.3], 0.0).unwrap().weights(), &[0.5, 0.3, 0.2]);
    assert_eq!(rank_masses(&[1.0], 0.0).unwrap().weights(), &[1.0]);
    let m = rank_masses(&[0.4, 0.1], 0.5).unwrap();
    assert_eq!(m.weights(), &[0.4, 0.1]);
    assert_eq!(m.tail(), 0.5);
    assert!(rank_masses(&[0.4, 0.1], 0.4).is_err());
}

#[test]
fn diversity_examples() {
    let half = StableIndex::new(0.5).unwrap();
    let one = MassPartition::new(vec![1.0], 0.0).unwrap();
    let v = diversity_estimate(&one, half, 0.5).unwrap();
    assert!((v - std::f64::consts::PI.sqrt() * 0.5f64.sqrt()).abs() < 1e-14);
    let small = MassPartition::new(vec![0.3, 0.3, 0.2, 0.2], 0.0).unwrap();
    assert_eq!(diversity_estimate(&small, half, 0.35).unwrap(), 0.0);
}

#[test]
fn diversity_agrees_with_block_count_estimate() {
    let half = StableIndex::new(0.5).unwrap();
    let mut rng = RngStream::new(3, 0);
    let n = 100_000;
    let mut close = 0;
    let (mut sd, mut sk) = (0.0, 0.0);
    for _ in 0..50 {
        let m = sample_gem(half, 0.0, 10_000, &mut rng).unwrap();
        let d = diversity_estimate(&m, half, 1e-4).unwrap();
        let k = paint_box(m.weights(), n, &mut rng).unwrap().k() as f64 / (n as f64).sqrt();
        if (d / k - 1.0).abs() < 0.2 {
            close += 1;
        }
        sd += d;
        sk += k;
    }
    assert!(close >= 40, "{close} of 50 within 20%");
    assert!((sd / sk - 1.0).abs() < 0.05, "{sd} vs {sk}");
}

#[test]
fn coagulate_examples() {
    let p = sp(vec![vec![1, 3], vec![2], vec![4]]);
    let q = sp(vec![vec![1, 2], vec![3]]);
    assert_eq!(coagulate(&p, &q).unwrap(), sp(vec![vec![1, 2, 3], vec![4]]));
    assert_eq!(p.restrict(2).unwrap(), sp(vec![vec![1], vec![2]]));
    assert_eq!(p.restrict(3).unwrap(), sp(vec![vec![1, 3], vec![2]]));
}

proptest! {
    #[test]
    fn rank_masses_idempotent(raw in prop::collection::vec(0.0f64..1.0, 1..30), tail in 0.0f64..1.0) {
        let s: f64 = raw.iter().sum::<f64>() + tail;
        prop_assume!(s > 0.0);
        let w: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let m = rank_masses(&w, tail / s).unwrap();
        let again = rank_masses(m.weights(), m.tail()).unwrap();
        prop_assert_eq!(&m, &again);
    }

    #[test]
    fn labels_round_trip(labels in prop::collection::vec(0usize..6, 1..40)) {
        let p = SetPartition::from_labels(&labels).unwrap();
        prop_assert_eq!(to_composition(&p).n(), labels.len());
        prop_assert_eq!(SetPartition::from_labels(&p.labels()).unwrap(), p.clone());
        prop_assert_eq!(SetPartition::from_json(&p.to_json()).unwrap(), p.clone());
        let firsts: Vec<usize> = p.blocks().iter().map(|b| b[0]).collect();
        prop_assert!(firsts.windows(2).all(|w| w[0] < w[1]));
    }
}
