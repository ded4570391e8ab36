//! Bonus plans: rules mapping a vector of realized outcomes to a split of
//! the additional funds among the `k` players.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{format_tuple, Interval};
use crate::rational::{self, Rational};

/// Shares of the funds, one per player, on the simplex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct AllocationVector(#[serde(with = "rational::vec_as_strings")] Vec<Rational>);

impl AllocationVector {
    pub fn new(shares: Vec<Rational>) -> Result<Self> {
        match simplex_defect(&shares) {
            None => Ok(AllocationVector(shares)),
            Some(reason) => Err(Error::NonSimplexTable { point: format_tuple(&shares), reason }),
        }
    }

    pub(crate) fn new_unchecked(shares: Vec<Rational>) -> Self {
        AllocationVector(shares)
    }

    pub fn uniform(k: usize) -> Self {
        AllocationVector(vec![rational::ratio(1, k as i64); k])
    }

    pub fn shares(&self) -> &[Rational] {
        &self.0
    }

    pub fn into_shares(self) -> Vec<Rational> {
        self.0
    }
}

impl fmt::Display for AllocationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_tuple(&self.0))
    }
}

/// Why `shares` is not a valid allocation, if it is not.
pub fn simplex_defect(shares: &[Rational]) -> Option<String> {
    if let Some(s) = shares.iter().find(|s| !rational::in_unit_interval(s)) {
        return Some(format!("share {} outside [0, 1]", rational::format(s)));
    }
    let total = rational::sum(shares);
    if !total.is_one() {
        return Some(format!("shares sum to {}", rational::format(&total)));
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanKind {
    /// Equal shares regardless of outcomes.
    Constant,
    /// Everything to the highest outcome, split equally on ties.
    WinnerTakeAll,
    /// Everything to the lowest outcome, split equally on ties.
    LoserTakeAll,
    /// `1/k + sum_j (r_i - r_j) / (2k(k-1)M)` inside `interval^k`, else `1/k`.
    MLinear { bound: Rational, interval: Interval },
    /// The same linear form wherever every coordinate stays in `[0, 2/k]`,
    /// and equal shares for the whole vector otherwise.
    BoundedLinear { bound: Rational },
    /// Explicit allocations at finitely many points, `fallback` elsewhere.
    Tabulated { points: BTreeMap<Vec<Rational>, AllocationVector>, fallback: AllocationVector },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BonusPlan {
    players: usize,
    kind: PlanKind,
}

impl BonusPlan {
    pub fn new(players: usize, kind: PlanKind) -> Result<Self> {
        if players < 2 {
            return Err(Error::InvalidPlan(format!("need at least 2 players, got {players}")));
        }
        match &kind {
            PlanKind::MLinear { bound, interval } => {
                if !bound.is_positive() {
                    return Err(Error::InvalidPlan("bound M must be positive".into()));
                }
                if interval.lo > interval.hi {
                    return Err(Error::InvalidPlan(format!("empty interval {interval}")));
                }
                // keeps every share inside [0, 2/k]
                if interval.width() > bound * rational::int(2) {
                    return Err(Error::InvalidPlan(format!(
                        "interval {interval} is wider than 2M = {}",
                        rational::display(&(bound * rational::int(2)))
                    )));
                }
            }
            PlanKind::BoundedLinear { bound } => {
                if !bound.is_positive() {
                    return Err(Error::InvalidPlan("bound M must be positive".into()));
                }
            }
            PlanKind::Tabulated { points, fallback } => {
                if fallback.shares().len() != players {
                    return Err(Error::ArityMismatch { expected: players, found: fallback.shares().len() });
                }
                for (point, alloc) in points {
                    if point.len() != players {
                        return Err(Error::ArityMismatch { expected: players, found: point.len() });
                    }
                    if alloc.shares().len() != players {
                        return Err(Error::ArityMismatch { expected: players, found: alloc.shares().len() });
                    }
                }
            }
            _ => {}
        }
        Ok(BonusPlan { players, kind })
    }

    pub fn constant(players: usize) -> Self {
        BonusPlan::new(players, PlanKind::Constant).expect("valid plan")
    }

    pub fn winner_take_all(players: usize) -> Self {
        BonusPlan::new(players, PlanKind::WinnerTakeAll).expect("valid plan")
    }

    pub fn loser_take_all(players: usize) -> Self {
        BonusPlan::new(players, PlanKind::LoserTakeAll).expect("valid plan")
    }

    pub fn m_linear(players: usize, bound: Rational, interval: Interval) -> Result<Self> {
        BonusPlan::new(players, PlanKind::MLinear { bound, interval })
    }

    pub fn bounded_linear(players: usize, bound: Rational) -> Result<Self> {
        BonusPlan::new(players, PlanKind::BoundedLinear { bound })
    }

    /// Tabulated plan from raw `(point, shares)` rows; every row and the
    /// fallback must lie on the simplex.
    pub fn tabulated(
        players: usize,
        rows: Vec<(Vec<Rational>, Vec<Rational>)>,
        fallback: Vec<Rational>,
    ) -> Result<Self> {
        let fallback = AllocationVector::new(fallback)?;
        let mut points = BTreeMap::new();
        for (point, shares) in rows {
            let alloc = AllocationVector::new(shares).map_err(|e| match e {
                Error::NonSimplexTable { reason, .. } => {
                    Error::NonSimplexTable { point: format_tuple(&point), reason }
                }
                other => other,
            })?;
            points.insert(point, alloc);
        }
        BonusPlan::new(players, PlanKind::Tabulated { points, fallback })
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn kind(&self) -> &PlanKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            PlanKind::Constant => "constant",
            PlanKind::WinnerTakeAll => "wta",
            PlanKind::LoserTakeAll => "lta",
            PlanKind::MLinear { .. } => "m_linear",
            PlanKind::BoundedLinear { .. } => "bounded_linear",
            PlanKind::Tabulated { .. } => "tabulated",
        }
    }

    fn check_arity(&self, r: &[Rational]) -> Result<()> {
        if r.len() != self.players {
            return Err(Error::ArityMismatch { expected: self.players, found: r.len() });
        }
        Ok(())
    }

    pub fn evaluate(&self, r: &[Rational]) -> Result<AllocationVector> {
        self.check_arity(r)?;
        let k = self.players;
        let shares = match &self.kind {
            PlanKind::Constant => return Ok(AllocationVector::uniform(k)),
            PlanKind::WinnerTakeAll => extreme_takes_all(r, r.iter().max()),
            PlanKind::LoserTakeAll => extreme_takes_all(r, r.iter().min()),
            PlanKind::MLinear { bound, interval } => {
                if r.iter().all(|v| interval.contains(v)) {
                    linear_shares(r, bound)
                } else {
                    return Ok(AllocationVector::uniform(k));
                }
            }
            PlanKind::BoundedLinear { bound } => {
                let shares = linear_shares(r, bound);
                let cap = rational::ratio(2, k as i64);
                if shares.iter().all(|s| !s.is_negative() && *s <= cap) {
                    shares
                } else {
                    return Ok(AllocationVector::uniform(k));
                }
            }
            PlanKind::Tabulated { points, fallback } => {
                return Ok(points.get(r).unwrap_or(fallback).clone());
            }
        };
        Ok(AllocationVector::new_unchecked(shares))
    }

    /// Player `i`'s share at `r`.
    pub fn share(&self, player: usize, r: &[Rational]) -> Result<Rational> {
        if player >= self.players {
            return Err(Error::PlayerOutOfRange { player, players: self.players });
        }
        Ok(self.evaluate(r)?.0.swap_remove(player))
    }

    /// `f(r) - (1/k, ..., 1/k)`, the zero-sum version of the plan.
    pub fn zero_sum_aux(&self, r: &[Rational]) -> Result<Vec<Rational>> {
        let even = rational::ratio(1, self.players as i64);
        Ok(self.evaluate(r)?.0.into_iter().map(|s| s - &even).collect())
    }

    /// Whether `t -> f_player(t, r_-player)` is affine on `[lo, hi]`.
    ///
    /// `r[player]` is ignored. A `true` answer is exact; `false` only means
    /// affinity could not be established.
    pub fn affine_along(&self, player: usize, r: &[Rational], lo: &Rational, hi: &Rational) -> bool {
        if lo >= hi {
            return true;
        }
        let others = || r.iter().enumerate().filter(move |(j, _)| *j != player).map(|(_, v)| v);
        let outside = |v: &Rational| v < lo || v > hi;
        match &self.kind {
            PlanKind::Constant => true,
            PlanKind::WinnerTakeAll => others().max().is_none_or(outside),
            PlanKind::LoserTakeAll => others().min().is_none_or(outside),
            PlanKind::MLinear { interval, .. } => {
                if !others().all(|v| interval.contains(v)) {
                    return true;
                }
                let inside = interval.lo <= *lo && *hi <= interval.hi;
                let disjoint = *hi < interval.lo || *lo > interval.hi;
                inside || disjoint
            }
            PlanKind::BoundedLinear { bound } => {
                let Some((low, high)) = bounded_linear_window(self.players, player, r, bound) else {
                    return true;
                };
                let inside = low <= *lo && *hi <= high;
                let disjoint = *hi < low || *lo > high;
                inside || disjoint
            }
            PlanKind::Tabulated { points, .. } => !points.keys().any(|p| {
                p.iter().enumerate().all(|(j, v)| j == player || *v == r[j])
                    && !outside(&p[player])
            }),
        }
    }

    pub fn to_file(&self) -> PlanFile {
        let kind = match &self.kind {
            PlanKind::Constant => KindFile::Constant,
            PlanKind::WinnerTakeAll => KindFile::Wta,
            PlanKind::LoserTakeAll => KindFile::Lta,
            PlanKind::MLinear { bound, interval } => KindFile::MLinear {
                bound: rational::format(bound),
                interval: [rational::format(&interval.lo), rational::format(&interval.hi)],
            },
            PlanKind::BoundedLinear { bound } => {
                KindFile::BoundedLinear { bound: rational::format(bound) }
            }
            PlanKind::Tabulated { points, fallback } => KindFile::Tabulated {
                points: points
                    .iter()
                    .map(|(r, a)| TablePoint {
                        r: r.iter().map(rational::format).collect(),
                        shares: a.shares().iter().map(rational::format).collect(),
                    })
                    .collect(),
                fallback: fallback.shares().iter().map(rational::format).collect(),
            },
        };
        PlanFile { players: self.players, kind }
    }

    pub fn from_file(file: &PlanFile) -> Result<Self> {
        let k = file.players;
        let parse_all =
            |v: &[String]| v.iter().map(|s| rational::parse(s)).collect::<Result<Vec<_>>>();
        match &file.kind {
            KindFile::Constant => BonusPlan::new(k, PlanKind::Constant),
            KindFile::Wta => BonusPlan::new(k, PlanKind::WinnerTakeAll),
            KindFile::Lta => BonusPlan::new(k, PlanKind::LoserTakeAll),
            KindFile::MLinear { bound, interval } => BonusPlan::m_linear(
                k,
                rational::parse(bound)?,
                Interval::new(rational::parse(&interval[0])?, rational::parse(&interval[1])?),
            ),
            KindFile::BoundedLinear { bound } => BonusPlan::bounded_linear(k, rational::parse(bound)?),
            KindFile::Tabulated { points, fallback } => {
                let rows = points
                    .iter()
                    .map(|p| Ok((parse_all(&p.r)?, parse_all(&p.shares)?)))
                    .collect::<Result<Vec<_>>>()?;
                BonusPlan::tabulated(k, rows, parse_all(fallback)?)
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("plan files always serialize")
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let file: PlanFile = serde_json::from_str(text)?;
        Ok(BonusPlan::from_file(&file)?)
    }

    /// Evaluates the plan on `sample.count` pseudo-random points plus every
    /// tabulated point and every corner of a declared interval, and reports
    /// the first allocation that leaves the simplex.
    pub fn validate_simplex(&self, sample: &SampleSpec) -> ValidationReport {
        let k = self.players;
        let mut points: Vec<Vec<Rational>> = Vec::new();
        match &self.kind {
            PlanKind::MLinear { interval, .. } => points.extend(corners(interval, k)),
            PlanKind::BoundedLinear { bound } => {
                points.extend(corners(&Interval::new(-bound.clone(), bound.clone()), k))
            }
            PlanKind::Tabulated { points: table, .. } => points.extend(table.keys().cloned()),
            _ => {}
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sample.seed);
        for _ in 0..sample.count {
            points.push((0..k).map(|_| random_in(&mut rng, &sample.range)).collect());
        }
        let evaluated = points.len();
        for point in points {
            let shares = self.evaluate(&point).expect("points have plan arity").into_shares();
            if let Some(reason) = simplex_defect(&shares) {
                return ValidationReport {
                    evaluated,
                    violation: Some(SimplexViolation { point, shares, reason }),
                };
            }
        }
        ValidationReport { evaluated, violation: None }
    }
}

fn extreme_takes_all(r: &[Rational], extreme: Option<&Rational>) -> Vec<Rational> {
    let extreme = extreme.expect("plans have at least two players");
    let winners = r.iter().filter(|v| *v == extreme).count();
    let each = rational::ratio(1, winners as i64);
    r.iter().map(|v| if v == extreme { each.clone() } else { Rational::zero() }).collect()
}

/// Unclamped linear shares `1/k + (k r_i - sum r) / (2k(k-1)M)`.
pub(crate) fn linear_shares(r: &[Rational], bound: &Rational) -> Vec<Rational> {
    let k = r.len() as i64;
    let total = rational::sum(r);
    let even = rational::ratio(1, k);
    let scale = bound * rational::int(2 * k * (k - 1));
    r.iter().map(|v| &even + (v * rational::int(k) - &total) / &scale).collect()
}

/// Range of `t` for which the bounded-linear plan stays linear when player
/// `player` reports `t` and the others report `r_-player`; `None` if empty.
fn bounded_linear_window(
    k: usize,
    player: usize,
    r: &[Rational],
    bound: &Rational,
) -> Option<(Rational, Rational)> {
    let kk = rational::int(k as i64);
    let km1 = rational::int(k as i64 - 1);
    let rest = rational::sum(r.iter().enumerate().filter(|(j, _)| *j != player).map(|(_, v)| v));
    // own coordinate: |t - rest/(k-1)| <= 2M
    let centre = &rest / &km1;
    let two_m = bound * rational::int(2);
    let mut low = &centre - &two_m;
    let mut high = &centre + &two_m;
    // coordinate j: |k r_j - rest - t| <= 2(k-1)M
    let slack = &two_m * &km1;
    for (j, v) in r.iter().enumerate() {
        if j == player {
            continue;
        }
        let c = v * &kk - &rest;
        low = low.max(&c - &slack);
        high = high.min(&c + &slack);
    }
    (low <= high).then_some((low, high))
}

fn corners(interval: &Interval, k: usize) -> Vec<Vec<Rational>> {
    if k > 12 {
        return Vec::new();
    }
    (0..1u32 << k)
        .map(|mask| {
            (0..k)
                .map(|i| if mask >> i & 1 == 1 { interval.hi.clone() } else { interval.lo.clone() })
                .collect()
        })
        .collect()
}

fn random_in(rng: &mut impl Rng, range: &Interval) -> Rational {
    let den: i64 = rng.gen_range(1..=64);
    let num: i64 = rng.gen_range(0..=den);
    &range.lo + range.width() * rational::ratio(num, den)
}

/// How `validate_simplex` draws its random points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSpec {
    pub count: usize,
    pub seed: u64,
    pub range: Interval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimplexViolation {
    #[serde(with = "rational::vec_as_strings")]
    pub point: Vec<Rational>,
    #[serde(with = "rational::vec_as_strings")]
    pub shares: Vec<Rational>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub evaluated: usize,
    pub violation: Option<SimplexViolation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// On-disk plan description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanFile {
    pub players: usize,
    #[serde(flatten)]
    pub kind: KindFile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KindFile {
    Constant,
    Wta,
    Lta,
    MLinear { bound: String, interval: [String; 2] },
    BoundedLinear { bound: String },
    Tabulated { points: Vec<TablePoint>, fallback: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TablePoint {
    pub r: Vec<String>,
    pub shares: Vec<String>,
}
