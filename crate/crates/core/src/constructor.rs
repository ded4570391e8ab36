//! Construction of plans under which the top-expectation action is an
//! equilibrium: the M-linear plan scaled to the market's support, and the
//! bounded-linear plan with a bound found by a truncation search.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{Market, MixedAction};
use crate::plans::BonusPlan;
use crate::rational::{self, Rational};

/// Largest absolute outcome of the market.
pub fn compute_ma(market: &Market) -> Rational {
    market.support_stats().bound
}

/// The M-linear plan with `M = M_A` and the support interval as domain.
pub fn build_m_linear(market: &Market, players: usize) -> Result<BonusPlan> {
    let stats = market.support_stats();
    if stats.bound.is_zero() {
        return Err(Error::DegenerateSupport);
    }
    BonusPlan::m_linear(players, stats.bound, stats.interval)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GridWitness {
    pub q: MixedAction,
    /// `E[X_ref - q]`.
    #[serde(with = "rational::as_string")]
    pub c_q: Rational,
    /// Smallest truncation level meeting both inequalities against the
    /// final `c`.
    #[serde(with = "rational::as_string")]
    pub m: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MSearchResult {
    /// The bound to use in the bounded-linear plan.
    #[serde(with = "rational::as_string")]
    pub bound: Rational,
    /// `min c_q` over the grid; a grid estimate of the infimum.
    #[serde(with = "rational::as_string")]
    pub c: Rational,
    pub grid_resolution: u32,
    /// Largest minimal truncation level over the grid.
    #[serde(with = "rational::as_string")]
    pub grid_bound: Rational,
    /// Half the largest gap `|X_i - X_ref|`; at or above it the plan is
    /// linear along every deviation from the reference profile.
    #[serde(with = "rational::as_string")]
    pub range_bound: Rational,
    /// Index of the unique top-expectation action.
    pub reference: usize,
    pub witnesses: Vec<GridWitness>,
}

/// Distribution of `q - X_ref` as value -> probability.
fn gap_distribution(market: &Market, q: &MixedAction, reference: usize) -> BTreeMap<Rational, Rational> {
    let mut dist = BTreeMap::new();
    for atom in market.atoms() {
        let gap = atom.portfolio_value(q) - &atom.outcomes()[reference];
        *dist.entry(gap).or_insert_with(Rational::zero) += atom.probability();
    }
    dist
}

/// `E[D 1{|D| <= m}]` and `sum_{|l| > m} |l| Pr(D = l)`.
pub fn truncation_quantities(dist: &BTreeMap<Rational, Rational>, m: &Rational) -> (Rational, Rational) {
    let mut inner = Rational::zero();
    let mut tail = Rational::zero();
    for (l, p) in dist {
        if l.abs() <= *m {
            inner += l * p;
        } else {
            tail += l.abs() * p;
        }
    }
    (inner, tail)
}

fn minimal_level(dist: &BTreeMap<Rational, Rational>, c: &Rational) -> Rational {
    let half = c / rational::int(2);
    let mut levels: Vec<Rational> = dist.keys().map(|l| l.abs()).filter(|l| l.is_positive()).collect();
    levels.sort();
    levels.dedup();
    // both quantities only change at the |l| values; at the largest one the
    // tail is empty and the inner sum is -c_q <= -c < -c/2
    levels
        .into_iter()
        .find(|m| {
            let (inner, tail) = truncation_quantities(dist, m);
            inner < -half.clone() && tail < half
        })
        .expect("largest gap always qualifies")
}

/// Searches a bound `M` for the bounded-linear plan over the simplex grid
/// with denominator `d`.
pub fn find_bounding_m(market: &Market, d: u32) -> Result<MSearchResult> {
    if d == 0 {
        return Err(Error::InvalidGrid("grid resolution must be at least 1".into()));
    }
    let n = market.num_actions();
    if n < 2 {
        return Err(Error::SingleAction);
    }
    let (_, argmax) = market.argmax_actions();
    if argmax.len() > 1 {
        let labels = argmax.iter().map(|&i| market.labels()[i].clone()).collect();
        return Err(Error::ExpectationNotUnique(labels));
    }
    let reference = argmax[0];

    let points: Vec<(MixedAction, BTreeMap<Rational, Rational>, Rational)> = MixedAction::grid(n, d)
        .into_iter()
        .filter(|q| q.pure_index() != Some(reference))
        .map(|q| {
            let dist = gap_distribution(market, &q, reference);
            let c_q = -dist.iter().fold(Rational::zero(), |acc, (l, p)| acc + l * p);
            (q, dist, c_q)
        })
        .collect();
    let c = points.iter().map(|(_, _, c_q)| c_q).min().expect("n >= 2 leaves a grid point").clone();

    let witnesses: Vec<GridWitness> = points
        .into_iter()
        .map(|(q, dist, c_q)| {
            let m = minimal_level(&dist, &c);
            GridWitness { q, c_q, m }
        })
        .collect();
    let grid_bound = witnesses.iter().map(|w| &w.m).max().expect("nonempty").clone();

    let range = market
        .atoms()
        .iter()
        .flat_map(|a| a.outcomes().iter().map(move |x| (x - &a.outcomes()[reference]).abs()))
        .max()
        .expect("nonempty");
    let range_bound = range / rational::int(2);
    let bound = grid_bound.clone().max(range_bound.clone());

    Ok(MSearchResult { bound, c, grid_resolution: d, grid_bound, range_bound, reference, witnesses })
}

/// Bounded-linear plan with the bound from [`find_bounding_m`].
pub fn build_bounded_linear(market: &Market, players: usize, d: u32) -> Result<BonusPlan> {
    let search = find_bounding_m(market, d)?;
    BonusPlan::bounded_linear(players, search.bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{check_optimal, induce_game, OptimalityVerdict, Resolution, SearchMethod, Verdict, DEFAULT_TENSOR_CAP};
    use crate::market::{section2_market, Atom, Interval, Profile};
    use crate::plans::{PlanKind, SampleSpec};
    use crate::rational::{int, parse, ratio};
    use proptest::prelude::*;

    fn market(rows: &[(Rational, Vec<i64>)]) -> Market {
        let n = rows[0].1.len();
        Market::new(
            (1..=n).map(|i| format!("X{i}")).collect(),
            rows.iter().map(|(p, o)| Atom::new(p.clone(), o.iter().map(|&v| int(v)).collect())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ma_of_small_markets() {
        assert_eq!(compute_ma(&section2_market()), ratio(1051, 1000));
        let m = market(&[(ratio(1, 2), vec![-7, 2]), (ratio(1, 2), vec![1, 1])]);
        assert_eq!(compute_ma(&m), int(7));
        let zero = market(&[(int(1), vec![0, 0])]);
        assert_eq!(compute_ma(&zero), int(0));
        assert_eq!(build_m_linear(&zero, 2), Err(Error::DegenerateSupport));
    }

    #[test]
    fn m_linear_on_the_two_bond_market() {
        let m = section2_market();
        let plan = build_m_linear(&m, 2).unwrap();
        assert_eq!(
            plan.kind(),
            &PlanKind::MLinear { bound: ratio(1051, 1000), interval: Interval::new(int(1), ratio(1051, 1000)) }
        );
        let r = check_optimal(&m, &plan, Resolution::Grid(10), DEFAULT_TENSOR_CAP).unwrap();
        assert_eq!(r.verdict, OptimalityVerdict::Optimal);

        let sym = market(&[(ratio(1, 2), vec![-1, 1]), (ratio(1, 2), vec![1, 0])]);
        let plan = build_m_linear(&sym, 3).unwrap();
        assert_eq!(plan.kind(), &PlanKind::MLinear { bound: int(1), interval: Interval::new(int(-1), int(1)) });
    }

    #[test]
    fn bounding_m_on_the_two_bond_market() {
        let m = section2_market();
        let s = find_bounding_m(&m, 10).unwrap();
        assert_eq!(s.c, ratio(97, 50000));
        assert_eq!(s.bound, ratio(1, 20));
        assert_eq!(s.range_bound, ratio(1, 40));
        assert_eq!(s.reference, 0);
        assert_eq!(s.witnesses.len(), 10);
        let best = s.witnesses.iter().find(|w| w.c_q == s.c).unwrap();
        assert_eq!(best.q, MixedAction::new(vec![ratio(9, 10), ratio(1, 10)]).unwrap());
        assert_eq!(best.m, ratio(1, 200));
    }

    #[test]
    fn bounding_m_for_two_constants() {
        let m = market(&[(int(1), vec![5, 3])]);
        for d in [1, 2, 5, 8] {
            let s = find_bounding_m(&m, d).unwrap();
            assert_eq!(s.bound, int(2));
            assert_eq!(s.c, ratio(2, d as i64));
        }
    }

    #[test]
    fn vertex_grid_gives_expectation_gaps() {
        let m = market(&[(ratio(1, 4), vec![4, 0, 9]), (ratio(3, 4), vec![2, 3, 0])]);
        let s = find_bounding_m(&m, 1).unwrap();
        // E = 5/2, 9/4, 9/4
        assert_eq!(s.c, ratio(1, 4));
        assert_eq!(s.witnesses.len(), 2);
    }

    #[test]
    fn relabelled_reference() {
        let m = market(&[(int(1), vec![3, 5])]);
        let s = find_bounding_m(&m, 4).unwrap();
        assert_eq!(s.reference, 1);
        assert_eq!(s.c, ratio(1, 2));
        let plan = build_bounded_linear(&m, 2, 4).unwrap();
        let g = induce_game(&m, &plan, int(0)).unwrap();
        let report = g.check_nash(&Profile::pure(&[1, 1], 2).unwrap(), Resolution::PureOnly).unwrap();
        assert_eq!(report.verdict, Verdict::Equilibrium);
    }

    #[test]
    fn search_errors() {
        let tie = market(&[(int(1), vec![2, 2])]);
        assert_eq!(find_bounding_m(&tie, 3), Err(Error::ExpectationNotUnique(vec!["X1".into(), "X2".into()])));
        let single = market(&[(int(1), vec![2])]);
        assert_eq!(find_bounding_m(&single, 3), Err(Error::SingleAction));
        assert!(matches!(find_bounding_m(&section2_market(), 0), Err(Error::InvalidGrid(_))));
        assert!(build_bounded_linear(&tie, 2, 3).is_err());
    }

    #[test]
    fn bounded_linear_on_the_two_bond_market() {
        let m = section2_market();
        let plan = build_bounded_linear(&m, 2, 10).unwrap();
        assert_eq!(plan.kind(), &PlanKind::BoundedLinear { bound: ratio(1, 20) });
        let g = induce_game(&m, &plan, int(0)).unwrap();
        let report = g.check_nash(&Profile::pure(&[0, 0], 2).unwrap(), Resolution::Grid(10)).unwrap();
        assert_eq!(report.verdict, Verdict::Equilibrium);
        assert!(report.players.iter().all(|p| p.best.method == SearchMethod::PureSufficient));
        let sample = SampleSpec { count: 200, seed: 7, range: Interval::new(int(-2), int(2)) };
        assert!(plan.validate_simplex(&sample).passed());
    }

    #[test]
    fn comonotone_outlier_keeps_m_small() {
        let tiny = parse("1/1000000").unwrap();
        let big = int(1_000_000);
        let m = Market::new(
            vec!["X1".into(), "X2".into()],
            vec![
                Atom::new(tiny.clone(), vec![big.clone(), big.clone()]),
                Atom::new(int(1) - &tiny, vec![int(2), int(1)]),
            ],
        )
        .unwrap();
        assert_eq!(compute_ma(&m), big);
        let s = find_bounding_m(&m, 10).unwrap();
        assert_eq!(s.bound, int(1));
        let plan = build_bounded_linear(&m, 2, 10).unwrap();
        let r = check_optimal(&m, &plan, Resolution::Grid(10), DEFAULT_TENSOR_CAP).unwrap();
        assert_eq!(r.verdict, OptimalityVerdict::Optimal);
    }

    fn arb_market() -> impl Strategy<Value = Market> {
        (2usize..4, 1usize..5)
            .prop_flat_map(|(n, atoms)| {
                (
                    prop::collection::vec(1u32..10, atoms),
                    prop::collection::vec(prop::collection::vec(-20i64..20, n), atoms),
                )
            })
            .prop_filter_map("needs a unique top action", |(weights, rows)| {
                let total: u32 = weights.iter().sum();
                let atoms = weights
                    .iter()
                    .zip(&rows)
                    .map(|(&w, o)| Atom::new(ratio(w as i64, total as i64), o.iter().map(|&v| ratio(v, 4)).collect()))
                    .collect();
                let n = rows[0].len();
                let m = Market::new((1..=n).map(|i| format!("X{i}")).collect(), atoms).ok()?;
                (m.argmax_actions().1.len() == 1).then_some(m)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn constructed_plans_are_optimal(m in arb_market(), k in 2usize..4) {
            let d = 4;
            if compute_ma(&m).is_positive() {
                let linear = build_m_linear(&m, k).unwrap();
                let r = check_optimal(&m, &linear, Resolution::Grid(d), DEFAULT_TENSOR_CAP).unwrap();
                prop_assert_eq!(r.verdict, OptimalityVerdict::Optimal);
            }
            let bounded = build_bounded_linear(&m, k, d).unwrap();
            let r = check_optimal(&m, &bounded, Resolution::Grid(d), DEFAULT_TENSOR_CAP).unwrap();
            prop_assert_eq!(r.verdict, OptimalityVerdict::Optimal);
        }

        #[test]
        fn search_result_is_consistent(m in arb_market()) {
            let s = find_bounding_m(&m, 6).unwrap();
            let half = &s.c / int(2);
            prop_assert!(s.c.is_positive());
            for w in &s.witnesses {
                prop_assert!(s.c <= w.c_q);
                let dist = gap_distribution(&m, &w.q, s.reference);
                for level in [&w.m, &s.bound] {
                    let (inner, tail) = truncation_quantities(&dist, level);
                    prop_assert!(inner < -half.clone());
                    prop_assert!(tail < half);
                }
            }
        }

        #[test]
        fn finer_grids_are_more_demanding(m in arb_market()) {
            let coarse = find_bounding_m(&m, 2).unwrap();
            let mid = find_bounding_m(&m, 4).unwrap();
            let fine = find_bounding_m(&m, 8).unwrap();
            prop_assert!(coarse.c >= mid.c && mid.c >= fine.c);
            prop_assert!(coarse.bound <= mid.bound && mid.bound <= fine.bound);
        }
    }
}
