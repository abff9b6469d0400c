#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use sgbh::{GroupPartition, GroupSelection, GroupTruthSummary, PValues, TruthAssignment};

/// A random nontrivial sparse configuration with p-values.
pub struct Instance {
    pub partition: GroupPartition,
    pub summary: GroupTruthSummary,
    pub truth: TruthAssignment,
    pub interesting: GroupSelection,
    pub pvals: PValues,
}

/// Groups are scattered over the index range; every interesting group has at
/// least one false null and every other group is fully null. False-null
/// p-values are `U^k` with `k` in `[2, 12)`, so some are tiny.
pub fn sparse_instance(rng: &mut impl Rng, max_m: usize, max_l: usize) -> Instance {
    let l = rng.random_range(1..=max_l);
    let mut sizes: Vec<usize> = (0..l).map(|_| rng.random_range(1..=(max_m / l).max(1))).collect();
    // keep at least one group with room for a false null
    if sizes.iter().all(|&n| n < 2) {
        sizes[0] = 2;
    }
    let m: usize = sizes.iter().sum();
    let mut labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(j, &n)| vec![j; n]).collect();
    labels.shuffle(rng);
    let partition = GroupPartition::from_labels(&labels).unwrap();

    let mut interesting: Vec<usize> = (0..l).filter(|_| rng.random_bool(0.5)).collect();
    if interesting.is_empty() {
        interesting.push(rng.random_range(0..l));
    }
    let interesting = GroupSelection::new(interesting, l).unwrap();
    let nulls: Vec<usize> = (0..l)
        .map(|j| if interesting.contains(j) { rng.random_range(0..sizes[j]) } else { sizes[j] })
        .collect();
    let summary = GroupTruthSummary::from_counts(nulls.clone(), sizes.clone()).unwrap();

    let mut is_null = vec![true; m];
    for j in 0..l {
        let mut members = partition.group(j).to_vec();
        members.shuffle(rng);
        for &i in &members[..sizes[j] - nulls[j]] {
            is_null[i] = false;
        }
    }
    let strength = rng.random_range(2.0..12.0);
    let p: Vec<f64> = is_null
        .iter()
        .map(|&null| {
            let u: f64 = rng.random();
            if null {
                u
            } else {
                u.powf(strength)
            }
        })
        .collect();
    Instance {
        partition,
        summary,
        truth: TruthAssignment::new(is_null),
        interesting,
        pvals: PValues::new(p).unwrap(),
    }
}

/// Pinned-tolerance check that prints a PASS/FAIL line before asserting.
pub fn report(criterion: &str, pass: bool, detail: impl std::fmt::Display) {
    println!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}
