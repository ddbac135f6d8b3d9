//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use proptest::prelude::*;
use rand::Rng;
use rankone::correlation::Bounds;
use rankone::rank1::{point_map, LevelFunction, PointImage, RankOneSpec, StageSpec, TowerIndex};
use rankone::{rat, ExactWalsh, Rational};

/// `(f, T^n f)` at tower `depth` by walking every level of that tower with
/// `point_map`: a level whose image stays in tower `depth` is resolved, any
/// other level with `f != 0` is charged `|f| · max|f|` of unresolved mass.
pub fn brute_autocorrelation(spec: &RankOneSpec, f: &LevelFunction<Rational>, n: u64, depth: usize) -> Bounds<Rational> {
    let index = TowerIndex::new(spec).unwrap();
    let h = index.heights[depth - 1];
    let w: Rational = spec.width(depth).unwrap();
    let value = |p: u64| {
        index
            .locate(depth, p, f.stage)
            .and_then(|l| f.levels.get(&l).cloned())
            .unwrap_or_else(Rational::zero)
    };
    let gmax = f.levels.values().map(|c| c.abs()).max().unwrap();
    let (mut x, mut e) = (Rational::zero(), Rational::zero());
    for p in 0..h {
        let v = value(p);
        if v.is_zero() {
            continue;
        }
        match point_map(spec, depth, p, n).unwrap() {
            PointImage::At { depth: d, position } if d == depth => x += &v * value(position),
            _ => e += v.abs() * &gmax,
        }
    }
    x *= &w;
    e *= &w;
    let norm: Rational = f.levels.values().map(|c| c * c).sum::<Rational>() * spec.width::<Rational>(f.stage).unwrap();
    let (lo, hi) = if f.levels.values().all(|c| !c.is_negative()) {
        (x.clone(), x + e)
    } else {
        (&x - &e, x + e)
    };
    Bounds::new(lo.max(-norm.clone()), hi.min(norm))
}

pub fn random_spec(rng: &mut impl Rng, max_stages: usize) -> RankOneSpec {
    let stages = (0..rng.random_range(1..=max_stages))
        .map(|_| {
            let cuts = rng.random_range(2..=3);
            StageSpec::new((0..cuts).map(|_| rng.random_range(0..=3)).collect())
        })
        .collect();
    RankOneSpec::new(rng.random_range(1..=3), stages)
}

pub fn random_function(rng: &mut impl Rng, spec: &RankOneSpec) -> LevelFunction<Rational> {
    let stage = rng.random_range(1..=spec.max_depth().min(2));
    let h = spec.height(stage).unwrap();
    let signed = rng.random_bool(0.5);
    let mut levels = BTreeMap::new();
    for l in 0..h {
        if levels.is_empty() || rng.random_bool(0.4) {
            let num = if signed { rng.random_range(-3..=3) } else { rng.random_range(1..=3) };
            if num != 0 {
                levels.insert(l, rat(num, rng.random_range(1..=4)));
            }
        }
    }
    if levels.is_empty() {
        levels.insert(0, rat(1, 1));
    }
    LevelFunction::new(stage, levels).unwrap()
}

pub fn spec_strategy(max_stages: usize) -> impl Strategy<Value = RankOneSpec> {
    (
        1u64..=3,
        prop::collection::vec(prop::collection::vec(0u64..=3, 2..=3), 1..=max_stages),
    )
        .prop_map(|(base, stages)| RankOneSpec::new(base, stages.into_iter().map(StageSpec::new).collect()))
}

/// A spec together with a stage-1 level function on it.
pub fn spec_and_function(max_stages: usize) -> impl Strategy<Value = (RankOneSpec, LevelFunction<Rational>)> {
    spec_strategy(max_stages).prop_flat_map(|spec| {
        let h = spec.base_height;
        let levels = prop::collection::btree_map(0..h, (-3i64..=3, 1i64..=4), 1..=h as usize).prop_map(|m| {
            let mut levels: BTreeMap<u64, Rational> = m.into_iter().filter(|(_, (a, _))| *a != 0).map(|(l, (a, b))| (l, rat(a, b))).collect();
            if levels.is_empty() {
                levels.insert(0, rat(1, 1));
            }
            LevelFunction::new(1, levels).unwrap()
        });
        (Just(spec), levels)
    })
}

/// Finite zero-mean Walsh polynomials on indices `-6..=6`.
pub fn walsh_strategy() -> impl Strategy<Value = ExactWalsh> {
    let coefficient = (1i64..=5, 1i64..=6, any::<bool>()).prop_map(|(a, b, neg)| rat(if neg { -a } else { a }, b));
    prop::collection::btree_map(prop::collection::btree_set(-6i64..=6, 1..=3), coefficient, 1..=8).prop_map(|m| {
        ExactWalsh::new(m.into_iter().map(|(s, c)| (s.into_iter().collect(), c))).unwrap()
    })
}
