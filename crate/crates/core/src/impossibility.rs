//! Probes for monotonicity failures of a plan, and builders that turn a
//! failure into an explicit market on which the plan is not optimal.
//!
//! Two players: any plan that is not constant on a pair of points loses
//! optimality on a one- or two-atom market. Three or more players: a plan
//! that reacts to a player's own coordinate admits a product market where a
//! profile attaining the best total expectation is not an equilibrium.

use num_traits::{One, Signed, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::game::{EarningsTerm, EquilibriumReport, Game, Resolution, Verdict, DEFAULT_TENSOR_CAP};
use crate::market::{format_tuple, product_market, Atom, ExtraAction, Market, Profile, DEFAULT_ATOM_CAP};
use crate::plans::BonusPlan;
use crate::rational::{self, Rational};

/// Upper limit on the number of points a grid spec may expand to.
pub const GRID_POINT_CAP: usize = 10_000;

/// Parses `"lo:hi:step"` into the ascending points `lo, lo+step, ... <= hi`.
pub fn parse_grid(spec: &str) -> Result<Vec<Rational>> {
    let bad = |why: &str| Error::InvalidGrid(format!("`{spec}`: {why}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(bad("expected lo:hi:step"));
    };
    let lo = rational::parse(lo)?;
    let hi = rational::parse(hi)?;
    let step = rational::parse(step)?;
    if !step.is_positive() {
        return Err(bad("step must be positive"));
    }
    if hi < lo {
        return Err(bad("hi is below lo"));
    }
    let mut points = Vec::new();
    let mut v = lo;
    while v <= hi {
        if points.len() == GRID_POINT_CAP {
            return Err(bad("too many points"));
        }
        points.push(v.clone());
        v += &step;
    }
    Ok(points)
}

fn normalize_grid(points: &[Rational], min_len: usize) -> Result<Vec<Rational>> {
    let mut grid = points.to_vec();
    grid.sort();
    grid.dedup();
    if grid.len() < min_len {
        return Err(Error::InvalidGrid(format!("need at least {min_len} distinct points, got {}", grid.len())));
    }
    Ok(grid)
}

/// Bounds the geometric parameter searches of the builders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchSchedule {
    pub cap: u32,
}

impl Default for SearchSchedule {
    fn default() -> Self {
        SearchSchedule { cap: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairCase {
    /// `f_i(y, y) < f_i(x, y)`: reporting less while the rival reports `y`
    /// pays more.
    CaseA,
    /// `f_i(x, x) < f_i(y, x)`.
    CaseB,
}

/// A failed inequality at grid points `x < y`. Values are written from the
/// player's perspective as `(own, rival)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairViolation {
    pub case: PairCase,
    pub player: usize,
    #[serde(with = "rational::as_string")]
    pub x: Rational,
    #[serde(with = "rational::as_string")]
    pub y: Rational,
    #[serde(with = "rational::as_string")]
    pub deficit: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairProbe {
    pub violations: Vec<PairViolation>,
    pub pairs_checked: usize,
    /// No violation, and the plan takes one value for player 1 on the
    /// four points of every pair.
    pub constant_on_grid: bool,
}

fn pair_share(plan: &BonusPlan, player: usize, own: &Rational, rival: &Rational) -> Result<Rational> {
    let mut r = vec![rival.clone(); 2];
    r[player] = own.clone();
    plan.share(player, &r)
}

fn two_player(plan: &BonusPlan) -> Result<()> {
    if plan.players() != 2 {
        return Err(Error::ArityMismatch { expected: 2, found: plan.players() });
    }
    Ok(())
}

impl PairViolation {
    /// Recomputes the deficit from the plan.
    fn recompute(&self, plan: &BonusPlan) -> Result<Rational> {
        let (x, y, i) = (&self.x, &self.y, self.player);
        Ok(match self.case {
            PairCase::CaseA => pair_share(plan, i, x, y)? - pair_share(plan, i, y, y)?,
            PairCase::CaseB => pair_share(plan, i, y, x)? - pair_share(plan, i, x, x)?,
        })
    }

    fn verify(&self, plan: &BonusPlan) -> Result<()> {
        two_player(plan)?;
        let fresh = self.recompute(plan)?;
        if self.x >= self.y || !fresh.is_positive() || fresh != self.deficit {
            return Err(Error::StaleViolation(format!(
                "{:?} for player {} at x={}, y={}: recorded {}, recomputed {}",
                self.case,
                self.player + 1,
                rational::format(&self.x),
                rational::format(&self.y),
                rational::format(&self.deficit),
                rational::format(&fresh)
            )));
        }
        Ok(())
    }
}

/// Checks the four pair inequalities at every `x < y` of the grid, in
/// lexicographic pair order and, per pair, case A then case B for player 1
/// then player 2.
pub fn probe_pairs(plan: &BonusPlan, points: &[Rational]) -> Result<PairProbe> {
    two_player(plan)?;
    let grid = normalize_grid(points, 1)?;
    let mut violations = Vec::new();
    let mut pairs_checked = 0;
    let mut constant = true;
    for (a, x) in grid.iter().enumerate() {
        for y in &grid[a + 1..] {
            pairs_checked += 1;
            for case in [PairCase::CaseA, PairCase::CaseB] {
                for player in 0..2 {
                    let v = PairViolation { case, player, x: x.clone(), y: y.clone(), deficit: Rational::zero() };
                    let deficit = v.recompute(plan)?;
                    if deficit.is_positive() {
                        violations.push(PairViolation { deficit, ..v });
                    }
                }
            }
            let f = |r: [&Rational; 2]| plan.share(0, &[r[0].clone(), r[1].clone()]);
            let values = [f([x, x])?, f([x, y])?, f([y, x])?, f([y, y])?];
            constant &= values.iter().all(|v| *v == values[0]);
        }
    }
    let constant_on_grid = violations.is_empty() && constant;
    if violations.is_empty() && !constant {
        // without violations the four inequalities sum to an identity, so
        // only a plan off the simplex can get here
        return Err(Error::InvalidPlan("pair inequalities hold but shares vary; plan is not fixed-sum".into()));
    }
    Ok(PairProbe { violations, pairs_checked, constant_on_grid })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// Lowering the own coordinate to `w_i < r_i` raises the share.
    Decrease,
    /// Raising the own coordinate to `y_i > r_i` raises the share.
    Increase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OwnCoordViolation {
    pub direction: Direction,
    pub player: usize,
    #[serde(with = "rational::vec_as_strings")]
    pub base: Vec<Rational>,
    #[serde(with = "rational::as_string")]
    pub witness: Rational,
    #[serde(with = "rational::as_string")]
    pub deficit: Rational,
}

impl OwnCoordViolation {
    fn moved(&self) -> Vec<Rational> {
        let mut r = self.base.clone();
        r[self.player] = self.witness.clone();
        r
    }

    fn verify(&self, plan: &BonusPlan) -> Result<()> {
        let stale = |why: String| Error::StaleViolation(format!("player {} at {}: {why}", self.player + 1, format_tuple(&self.base)));
        if plan.players() != self.base.len() {
            return Err(Error::ArityMismatch { expected: plan.players(), found: self.base.len() });
        }
        let mut sorted = self.base.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.base.len() {
            return Err(stale("base coordinates repeat".into()));
        }
        let own = &self.base[self.player];
        let direction_ok = match self.direction {
            Direction::Decrease => self.witness < *own,
            Direction::Increase => self.witness > *own,
        };
        if !direction_ok {
            return Err(stale(format!("witness {} on the wrong side", rational::format(&self.witness))));
        }
        let fresh = plan.share(self.player, &self.moved())? - plan.share(self.player, &self.base)?;
        if !fresh.is_positive() || fresh != self.deficit {
            return Err(stale(format!(
                "recorded {}, recomputed {}",
                rational::format(&self.deficit),
                rational::format(&fresh)
            )));
        }
        Ok(())
    }
}

/// Ordered tuples of `k` distinct grid points, lexicographic in index.
fn distinct_tuples(grid: &[Rational], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn walk(n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in 0..n {
            if !current.contains(&i) {
                current.push(i);
                walk(n, k, current, out);
                current.pop();
            }
        }
    }
    walk(grid.len(), k, &mut current, &mut out);
    out
}

/// Scans base points with distinct coordinates from the grid; for each
/// player and each other grid value as the player's own coordinate, reports
/// a strict gain in share.
pub fn probe_own_coordinate(plan: &BonusPlan, points: &[Rational]) -> Result<Vec<OwnCoordViolation>> {
    let k = plan.players();
    if k < 3 {
        return Err(Error::ArityMismatch { expected: 3, found: k });
    }
    let grid = normalize_grid(points, 1)?;
    let mut found = Vec::new();
    for tuple in distinct_tuples(&grid, k) {
        let base: Vec<Rational> = tuple.iter().map(|&i| grid[i].clone()).collect();
        let shares = plan.evaluate(&base)?.into_shares();
        for player in 0..k {
            for witness in &grid {
                let own = &base[player];
                let direction = match witness.cmp(own) {
                    std::cmp::Ordering::Less => Direction::Decrease,
                    std::cmp::Ordering::Greater => Direction::Increase,
                    std::cmp::Ordering::Equal => continue,
                };
                let mut moved = base.clone();
                moved[player] = witness.clone();
                let deficit = plan.share(player, &moved)? - &shares[player];
                if deficit.is_positive() {
                    found.push(OwnCoordViolation {
                        direction,
                        player,
                        base: base.clone(),
                        witness: witness.clone(),
                        deficit,
                    });
                }
            }
        }
    }
    Ok(found)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExpectationEntry {
    pub action: String,
    #[serde(with = "rational::as_string")]
    pub expectation: Rational,
}

/// Parameters chosen by a builder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "construction", rename_all = "snake_case")]
pub enum Construction {
    CaseA,
    CaseB {
        #[serde(with = "rational::as_string")]
        delta: Rational,
        #[serde(with = "rational::as_string")]
        p: Rational,
        #[serde(with = "rational::as_string")]
        z: Rational,
        halvings: u32,
    },
    Decrease {
        #[serde(with = "rational::as_string")]
        pi_r: Rational,
    },
    Increase {
        #[serde(with = "rational::as_string")]
        p: Rational,
        #[serde(with = "rational::as_string")]
        z_upper: Rational,
        #[serde(with = "rational::as_string")]
        z_lower: Rational,
        #[serde(with = "rational::as_string")]
        pi_r: Rational,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    #[serde(serialize_with = "market_as_file")]
    pub market: Market,
    pub profile: Profile,
    pub player: usize,
    /// Action index the player deviates to.
    pub deviation: usize,
    #[serde(with = "rational::as_string")]
    pub gain: Rational,
    /// Expectation of every action of the market.
    pub certificate: Vec<ExpectationEntry>,
    #[serde(flatten)]
    pub construction: Construction,
}

fn market_as_file<S: Serializer>(market: &Market, s: S) -> std::result::Result<S::Ok, S::Error> {
    market.to_file().serialize(s)
}

impl Counterexample {
    fn new(
        plan: &BonusPlan,
        market: Market,
        actions: &[usize],
        player: usize,
        deviation: usize,
        construction: Construction,
    ) -> Result<Self> {
        let profile = Profile::pure(actions, market.num_actions())?;
        let gain = pure_deviation_gain(plan, &market, actions, player, deviation)?;
        let certificate = market
            .labels()
            .iter()
            .zip(market.action_expectations())
            .map(|(action, expectation)| ExpectationEntry { action: action.clone(), expectation })
            .collect();
        Ok(Counterexample { market, profile, player, deviation, gain, certificate, construction })
    }

    /// Re-runs the equilibrium check on the market: the profile must attain
    /// the top expectation for every player, the deviation must have
    /// strictly lower expectation, and the deviation must gain exactly
    /// `gain > 0`.
    pub fn validate(&self, plan: &BonusPlan) -> Result<EquilibriumReport> {
        let stale = |why: String| Error::StaleViolation(why);
        let (mu_star, _) = self.market.argmax_actions();
        let actions = self.profile.pure_actions().ok_or_else(|| stale("profile is not pure".into()))?;
        let expectations = self.market.action_expectations();
        for (entry, e) in self.certificate.iter().zip(&expectations) {
            if entry.expectation != *e {
                return Err(stale(format!("certificate for {} disagrees with the market", entry.action)));
            }
        }
        if actions.iter().any(|&a| expectations[a] != mu_star) {
            return Err(stale("profile does not attain the top expectation".into()));
        }
        if expectations[self.deviation] >= mu_star {
            return Err(stale("deviation expectation is not strictly lower".into()));
        }
        let game = Game::induce(&self.market, plan, Rational::zero(), EarningsTerm::default(), DEFAULT_TENSOR_CAP)?;
        let report = game.check_nash(&self.profile, Resolution::PureOnly)?;
        let check = &report.players[self.player];
        let realized = &check.pure_values[self.deviation] - &check.current;
        if report.verdict != Verdict::NotEquilibrium || realized != self.gain || !self.gain.is_positive() {
            return Err(stale(format!(
                "expected gain {}, game reports {} ({})",
                rational::format(&self.gain),
                rational::format(&realized),
                report.verdict
            )));
        }
        Ok(report)
    }
}

/// Exact gain of `player` switching from `actions[player]` to `deviation`,
/// all at `lambda = 0`.
fn pure_deviation_gain(
    plan: &BonusPlan,
    market: &Market,
    actions: &[usize],
    player: usize,
    deviation: usize,
) -> Result<Rational> {
    let mut gain = Rational::zero();
    for atom in market.atoms() {
        let mut r: Vec<Rational> = actions.iter().map(|&a| atom.outcomes()[a].clone()).collect();
        let before = plan.share(player, &r)?;
        r[player] = atom.outcomes()[deviation].clone();
        gain += atom.probability() * (plan.share(player, &r)? - before);
    }
    Ok(gain)
}

fn pair_market(atoms: Vec<Atom>) -> Result<Market> {
    Market::new(vec!["X1".into(), "X2".into()], atoms)
}

/// One-atom market `X1 = y`, `X2 = x` on which the violating player gains
/// by moving from `X1` to `X2`.
pub fn build_case_a(plan: &BonusPlan, violation: &PairViolation) -> Result<Counterexample> {
    violation.verify(plan)?;
    if violation.case != PairCase::CaseA {
        return Err(Error::StaleViolation("not a case A violation".into()));
    }
    let market = pair_market(vec![Atom::new(Rational::one(), vec![violation.y.clone(), violation.x.clone()])])?;
    Counterexample::new(plan, market, &[0, 0], violation.player, 1, Construction::CaseA)
}

/// Two-atom market `(p: X1 = x, X2 = y)`, `(1-p: X1 = z, X2 = x)` with `z`
/// large enough that `E[X1] > E[X2]`. The loss on the second atom is at
/// most `1 - p`, so `p = (1 + d/2)/(1 + d)` leaves a gain of at least
/// `d/2`; if the plan is worse than that bound allows, `1 - p` is halved.
pub fn build_case_b(plan: &BonusPlan, violation: &PairViolation, schedule: SearchSchedule) -> Result<Counterexample> {
    violation.verify(plan)?;
    if violation.case != PairCase::CaseB {
        return Err(Error::StaleViolation("not a case B violation".into()));
    }
    let (x, y) = (&violation.x, &violation.y);
    let delta = violation.deficit.clone();
    let one = Rational::one();
    let mut p = (&one + &delta / rational::int(2)) / (&one + &delta);
    for halvings in 0..schedule.cap {
        let z = x + &p * (y - x) / (&one - &p) + &one;
        let market = pair_market(vec![
            Atom::new(p.clone(), vec![x.clone(), y.clone()]),
            Atom::new(&one - &p, vec![z.clone(), x.clone()]),
        ])?;
        let construction = Construction::CaseB { delta: delta.clone(), p: p.clone(), z, halvings };
        let example = Counterexample::new(plan, market, &[0, 0], violation.player, 1, construction)?;
        if example.gain.is_positive() {
            return Ok(example);
        }
        p = &one - (&one - &p) / rational::int(2);
    }
    Err(Error::SearchExhausted { iterations: schedule.cap, what: "case B probability".into() })
}

/// Marginal on the base coordinates: half the mass on the deviating
/// player's value, the rest split evenly; scaled by `scale`.
fn base_marginal(violation: &OwnCoordViolation, scale: &Rational) -> Vec<(Rational, Rational)> {
    let k = violation.base.len() as i64;
    violation
        .base
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let mass = if j == violation.player { rational::ratio(1, 2) } else { rational::ratio(1, 2 * (k - 1)) };
            (v.clone(), scale * mass)
        })
        .collect()
}

/// Probability of the base tuple under the unscaled marginal.
fn tuple_mass(violation: &OwnCoordViolation) -> Rational {
    let marginal = base_marginal(violation, &Rational::one());
    marginal.iter().fold(Rational::one(), |acc, (_, p)| acc * p)
}

fn own_profile(k: usize) -> Vec<usize> {
    (0..k).collect()
}

/// Product market of `k` copies of a marginal on the base coordinates plus
/// an action `W` that copies the player's coordinate except on the base
/// tuple, where it pays the lower witness.
pub fn build_decrease_counterexample(plan: &BonusPlan, violation: &OwnCoordViolation) -> Result<Counterexample> {
    build_decrease_with_cap(plan, violation, DEFAULT_ATOM_CAP)
}

pub fn build_decrease_with_cap(
    plan: &BonusPlan,
    violation: &OwnCoordViolation,
    atom_cap: u128,
) -> Result<Counterexample> {
    violation.verify(plan)?;
    if violation.direction != Direction::Decrease {
        return Err(Error::StaleViolation("not a decrease violation".into()));
    }
    let k = violation.base.len();
    let (base, witness, i) = (violation.base.clone(), violation.witness.clone(), violation.player);
    let w = ExtraAction::new("W", move |coords: &[Rational]| {
        Some(if coords == base.as_slice() { witness.clone() } else { coords[i].clone() })
    });
    let market = product_market(&base_marginal(violation, &Rational::one()), k, &[w], atom_cap)?;
    let construction = Construction::Decrease { pi_r: tuple_mass(violation) };
    Counterexample::new(plan, market, &own_profile(k), i, k, construction)
}

/// Like the decrease construction, with an extra marginal value `z_up` of
/// mass `1 - p`; the action `Z` pays the higher witness on the base tuple
/// and `z_low` wherever any coordinate is `z_up`. `p` climbs `1 - 2^-t`
/// until the worst-case loss on the `z_up` tuples is beaten, then `z_up`
/// and `z_low` spread by powers of two until `Z` has strictly lower
/// expectation.
pub fn build_increase_counterexample(
    plan: &BonusPlan,
    violation: &OwnCoordViolation,
    schedule: SearchSchedule,
) -> Result<Counterexample> {
    build_increase_with_cap(plan, violation, schedule, DEFAULT_ATOM_CAP)
}

pub fn build_increase_with_cap(
    plan: &BonusPlan,
    violation: &OwnCoordViolation,
    schedule: SearchSchedule,
    atom_cap: u128,
) -> Result<Counterexample> {
    violation.verify(plan)?;
    if violation.direction != Direction::Increase {
        return Err(Error::StaleViolation("not an increase violation".into()));
    }
    let k = violation.base.len();
    let i = violation.player;
    let one = Rational::one();
    let pi_r = tuple_mass(violation);

    let mut p = None;
    for t in 1..=schedule.cap {
        let candidate = &one - rational::ratio(1, 1) / Rational::from_integer(num_traits::pow(2.into(), t as usize));
        let pk = num_traits::pow(candidate.clone(), k);
        if &violation.deficit * &pk * &pi_r - (&one - &pk) > Rational::zero() {
            p = Some(candidate);
            break;
        }
    }
    let p = p.ok_or_else(|| Error::SearchExhausted { iterations: schedule.cap, what: "increase probability".into() })?;

    let reach = violation
        .base
        .iter()
        .chain(std::iter::once(&violation.witness))
        .map(|v| v.abs())
        .max()
        .expect("nonempty");
    for s in 0..schedule.cap {
        let spread = Rational::from_integer(num_traits::pow(2.into(), s as usize));
        let z_upper = &reach + &spread;
        let z_lower = -(&reach + &spread);
        let mut marginal = base_marginal(violation, &p);
        marginal.push((z_upper.clone(), &one - &p));
        let (base, witness) = (violation.base.clone(), violation.witness.clone());
        let (up, low) = (z_upper.clone(), z_lower.clone());
        let z = ExtraAction::new("Z", move |coords: &[Rational]| {
            Some(if coords.contains(&up) {
                low.clone()
            } else if coords == base.as_slice() {
                witness.clone()
            } else {
                coords[i].clone()
            })
        });
        let market = product_market(&marginal, k, &[z], atom_cap)?;
        if market.action_expectation(k) < market.action_expectation(i) {
            let construction =
                Construction::Increase { p: p.clone(), z_upper, z_lower, pi_r: pi_r.clone() };
            let example = Counterexample::new(plan, market, &own_profile(k), i, k, construction)?;
            if !example.gain.is_positive() {
                return Err(Error::SearchExhausted {
                    iterations: s + 1,
                    what: "realized gain is not positive; plan shares leave [0, 1]".into(),
                });
            }
            return Ok(example);
        }
    }
    Err(Error::SearchExhausted { iterations: schedule.cap, what: "increase spread".into() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum UniversalityVerdict {
    /// No violation at any grid point; a statement about the grid only.
    ConstantOnGrid { points: usize },
    Counterexample {
        violation: Box<Violation>,
        #[serde(flatten)]
        counterexample: Box<Counterexample>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Violation {
    Pair(PairViolation),
    OwnCoordinate(OwnCoordViolation),
}

/// Probes the plan on the grid and builds a validated counterexample from
/// the first violation found.
pub fn universality_verdict(plan: &BonusPlan, grid: &[Rational], schedule: SearchSchedule) -> Result<UniversalityVerdict> {
    universality_verdict_with_cap(plan, grid, schedule, DEFAULT_ATOM_CAP)
}

pub fn universality_verdict_with_cap(
    plan: &BonusPlan,
    grid: &[Rational],
    schedule: SearchSchedule,
    atom_cap: u128,
) -> Result<UniversalityVerdict> {
    let k = plan.players();
    let points = normalize_grid(grid, k)?.len();
    let (violation, example) = if k == 2 {
        let probe = probe_pairs(plan, grid)?;
        let Some(v) = probe.violations.into_iter().next() else {
            return Ok(UniversalityVerdict::ConstantOnGrid { points });
        };
        let example = match v.case {
            PairCase::CaseA => build_case_a(plan, &v)?,
            PairCase::CaseB => build_case_b(plan, &v, schedule)?,
        };
        (Box::new(Violation::Pair(v)), example)
    } else {
        let Some(v) = probe_own_coordinate(plan, grid)?.into_iter().next() else {
            return Ok(UniversalityVerdict::ConstantOnGrid { points });
        };
        let example = match v.direction {
            Direction::Decrease => build_decrease_with_cap(plan, &v, atom_cap)?,
            Direction::Increase => build_increase_with_cap(plan, &v, schedule, atom_cap)?,
        };
        (Box::new(Violation::OwnCoordinate(v)), example)
    };
    example.validate(plan)?;
    Ok(UniversalityVerdict::Counterexample { violation, counterexample: Box::new(example) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructor::build_m_linear;
    use crate::market::section2_market;
    use crate::rational::{int, ratio};

    fn ints(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| int(x)).collect()
    }

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("0:1:1").unwrap(), ints(&[0, 1]));
        assert_eq!(parse_grid("-1:1:1/2").unwrap(), vec![int(-1), ratio(-1, 2), int(0), ratio(1, 2), int(1)]);
        assert_eq!(parse_grid("0:1:0.4").unwrap(), vec![int(0), ratio(2, 5), ratio(4, 5)]);
        for bad in ["0:1", "0:1:0", "1:0:1", "0:1:-1", "0:100000:1/1"] {
            assert!(matches!(parse_grid(bad), Err(Error::InvalidGrid(_))), "{bad}");
        }
        assert!(matches!(parse_grid("a:1:1"), Err(Error::UnparsableNumber(_))));
    }

    #[test]
    fn pair_probes() {
        let grid = ints(&[0, 1]);
        let wta = probe_pairs(&BonusPlan::winner_take_all(2), &grid).unwrap();
        let first = &wta.violations[0];
        assert_eq!((first.case, first.player), (PairCase::CaseB, 0));
        assert_eq!(first.deficit, ratio(1, 2));
        assert!(!wta.constant_on_grid);

        let lta = probe_pairs(&BonusPlan::loser_take_all(2), &grid).unwrap();
        let first = &lta.violations[0];
        assert_eq!((first.case, first.player), (PairCase::CaseA, 0));
        assert_eq!(first.deficit, ratio(1, 2));

        let constant = probe_pairs(&BonusPlan::constant(2), &ints(&[-3, 0, 2, 9])).unwrap();
        assert!(constant.violations.is_empty() && constant.constant_on_grid);
        assert_eq!(constant.pairs_checked, 6);

        assert!(matches!(
            probe_pairs(&BonusPlan::winner_take_all(3), &grid),
            Err(Error::ArityMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn case_a_on_loser_take_all() {
        let plan = BonusPlan::loser_take_all(2);
        let v = probe_pairs(&plan, &ints(&[0, 1])).unwrap().violations.remove(0);
        let ce = build_case_a(&plan, &v).unwrap();
        assert_eq!(ce.gain, ratio(1, 2));
        assert_eq!(ce.market.atoms().len(), 1);
        assert_eq!(ce.certificate[0].expectation, int(1));
        assert_eq!(ce.certificate[1].expectation, int(0));
        ce.validate(&plan).unwrap();
    }

    #[test]
    fn case_a_for_the_second_player() {
        let plan = BonusPlan::loser_take_all(2);
        let v = PairViolation { case: PairCase::CaseA, player: 1, x: int(0), y: int(1), deficit: ratio(1, 2) };
        let ce = build_case_a(&plan, &v).unwrap();
        // f_2(y, x) - f_2(y, y)
        assert_eq!(ce.gain, plan.share(1, &ints(&[1, 0])).unwrap() - plan.share(1, &ints(&[1, 1])).unwrap());
        let report = ce.validate(&plan).unwrap();
        assert_eq!(report.players[1].best.strategy.pure_index(), Some(1));
    }

    #[test]
    fn case_b_on_winner_take_all() {
        let plan = BonusPlan::winner_take_all(2);
        let v = probe_pairs(&plan, &ints(&[0, 1])).unwrap().violations.remove(0);
        let ce = build_case_b(&plan, &v, SearchSchedule::default()).unwrap();
        assert_eq!(
            ce.construction,
            Construction::CaseB { delta: ratio(1, 2), p: ratio(5, 6), z: int(6), halvings: 0 }
        );
        assert_eq!(ce.gain, ratio(1, 3));
        assert_eq!(ce.certificate[0].expectation, int(1));
        assert_eq!(ce.certificate[1].expectation, ratio(5, 6));
        ce.validate(&plan).unwrap();
    }

    #[test]
    fn case_b_conservative_bound() {
        // p * delta - (1 - p) = delta / 2 for the chosen p
        for (n, d) in [(1, 2), (1, 100), (3, 4), (1, 1)] {
            let delta = ratio(n, d);
            let one = Rational::one();
            let p = (&one + &delta / int(2)) / (&one + &delta);
            assert_eq!(&p * &delta - (&one - &p), &delta / int(2));
        }
    }

    #[test]
    fn case_b_defeats_the_m_linear_plan_off_its_market() {
        let plan = build_m_linear(&section2_market(), 2).unwrap();
        let grid = vec![int(1), ratio(1051, 1000), int(2)];
        let v = probe_pairs(&plan, &grid).unwrap().violations.remove(0);
        assert_eq!(v.case, PairCase::CaseB);
        assert_eq!(v.deficit, ratio(51, 4204));
        let ce = build_case_b(&plan, &v, SearchSchedule::default()).unwrap();
        let Construction::CaseB { z, p, .. } = &ce.construction else { panic!() };
        assert!(*z > ratio(1051, 1000));
        assert_eq!(ce.gain, p * ratio(51, 4204));
        ce.validate(&plan).unwrap();
    }

    #[test]
    fn worst_case_second_atom_still_leaves_half_the_deficit() {
        // delta = 1/10 gives p = 21/22 and z = 22; the table makes the
        // second atom cost the full share
        let plan = BonusPlan::tabulated(
            2,
            vec![
                (ints(&[0, 0]), vec![ratio(9, 10), ratio(1, 10)]),
                (ints(&[1, 0]), vec![int(1), int(0)]),
                (ints(&[0, 22]), vec![int(0), int(1)]),
                (ints(&[22, 22]), vec![int(1), int(0)]),
            ],
            vec![ratio(1, 2), ratio(1, 2)],
        )
        .unwrap();
        let v = PairViolation { case: PairCase::CaseB, player: 0, x: int(0), y: int(1), deficit: ratio(1, 10) };
        let ce = build_case_b(&plan, &v, SearchSchedule::default()).unwrap();
        assert_eq!(ce.construction, Construction::CaseB { delta: ratio(1, 10), p: ratio(21, 22), z: int(22), halvings: 0 });
        assert_eq!(ce.gain, ratio(1, 20));
        ce.validate(&plan).unwrap();
        assert!(matches!(
            build_case_b(&plan, &v, SearchSchedule { cap: 0 }),
            Err(Error::SearchExhausted { iterations: 0, .. })
        ));
    }

    #[test]
    fn stale_violations_are_rejected() {
        let plan = BonusPlan::constant(2);
        let v = PairViolation { case: PairCase::CaseB, player: 0, x: int(0), y: int(1), deficit: ratio(1, 2) };
        assert!(matches!(build_case_b(&plan, &v, SearchSchedule::default()), Err(Error::StaleViolation(_))));
        let wta = BonusPlan::winner_take_all(2);
        let wrong = PairViolation { deficit: ratio(1, 3), ..v };
        assert!(matches!(build_case_b(&wta, &wrong, SearchSchedule::default()), Err(Error::StaleViolation(_))));
    }

    #[test]
    fn own_coordinate_probes() {
        let wta = BonusPlan::winner_take_all(3);
        let found = probe_own_coordinate(&wta, &ints(&[1, 2, 3, 4])).unwrap();
        let target = OwnCoordViolation {
            direction: Direction::Increase,
            player: 0,
            base: ints(&[1, 2, 3]),
            witness: int(4),
            deficit: int(1),
        };
        assert!(found.contains(&target));

        let lta = BonusPlan::loser_take_all(3);
        let found = probe_own_coordinate(&lta, &ints(&[0, 1, 2, 3])).unwrap();
        let target = OwnCoordViolation {
            direction: Direction::Decrease,
            player: 0,
            base: ints(&[2, 1, 3]),
            witness: int(0),
            deficit: int(1),
        };
        assert!(found.contains(&target));

        assert!(probe_own_coordinate(&BonusPlan::constant(3), &ints(&[0, 1, 2, 3])).unwrap().is_empty());
        assert!(matches!(
            probe_own_coordinate(&BonusPlan::constant(2), &ints(&[0, 1])),
            Err(Error::ArityMismatch { .. })
        ));
    }

    #[test]
    fn decrease_on_loser_take_all() {
        let plan = BonusPlan::loser_take_all(3);
        let v = OwnCoordViolation {
            direction: Direction::Decrease,
            player: 0,
            base: ints(&[2, 1, 3]),
            witness: int(0),
            deficit: int(1),
        };
        let ce = build_decrease_counterexample(&plan, &v).unwrap();
        assert_eq!(ce.market.atoms().len(), 27);
        assert_eq!(ce.construction, Construction::Decrease { pi_r: ratio(1, 32) });
        assert_eq!(ce.certificate[0].expectation, int(2));
        assert_eq!(ce.certificate[3].expectation, ratio(31, 16));
        assert_eq!(ce.gain, ratio(1, 32));
        ce.validate(&plan).unwrap();

        // exhaustive oracle over the 27 tuples
        let support = [(int(2), ratio(1, 2)), (int(1), ratio(1, 4)), (int(3), ratio(1, 4))];
        let mut gain = Rational::zero();
        for a in &support {
            for b in &support {
                for c in &support {
                    let r = vec![a.0.clone(), b.0.clone(), c.0.clone()];
                    if r == ints(&[2, 1, 3]) {
                        let moved = ints(&[0, 1, 3]);
                        gain += &a.1 * &b.1 * &c.1 * (plan.share(0, &moved).unwrap() - plan.share(0, &r).unwrap());
                    }
                }
            }
        }
        assert_eq!(gain, ratio(1, 32));
    }

    #[test]
    fn decrease_with_witness_inside_the_support() {
        let plan = BonusPlan::loser_take_all(3);
        let v = OwnCoordViolation {
            direction: Direction::Decrease,
            player: 2,
            base: ints(&[1, 3, 2]),
            witness: int(1),
            deficit: ratio(1, 2),
        };
        let ce = build_decrease_counterexample(&plan, &v).unwrap();
        ce.validate(&plan).unwrap();
        assert!(matches!(
            build_decrease_with_cap(&plan, &v, 26),
            Err(Error::AtomCapExceeded { atoms: 27, cap: 26 })
        ));
    }

    #[test]
    fn increase_on_winner_take_all() {
        let plan = BonusPlan::winner_take_all(3);
        let v = OwnCoordViolation {
            direction: Direction::Increase,
            player: 0,
            base: ints(&[1, 2, 3]),
            witness: int(4),
            deficit: int(1),
        };
        let ce = build_increase_counterexample(&plan, &v, SearchSchedule::default()).unwrap();
        let Construction::Increase { p, z_upper, z_lower, pi_r } = &ce.construction else { panic!() };
        assert_eq!(*p, ratio(127, 128));
        assert_eq!(*pi_r, ratio(1, 32));
        assert!(*z_upper > int(4) && *z_lower < int(-4));
        assert_eq!(ce.market.atoms().len(), 64);
        assert!(ce.gain.is_positive());
        ce.validate(&plan).unwrap();
        assert!(matches!(
            build_increase_counterexample(&plan, &v, SearchSchedule { cap: 6 }),
            Err(Error::SearchExhausted { .. })
        ));
    }

    #[test]
    fn verdicts() {
        let s = SearchSchedule::default();
        let wta = universality_verdict(&BonusPlan::winner_take_all(2), &ints(&[0, 1]), s).unwrap();
        let UniversalityVerdict::Counterexample { counterexample, .. } = &wta else { panic!() };
        assert_eq!(counterexample.gain, ratio(1, 3));

        let lta = universality_verdict(&BonusPlan::loser_take_all(2), &ints(&[0, 1]), s).unwrap();
        let UniversalityVerdict::Counterexample { counterexample, .. } = &lta else { panic!() };
        assert_eq!(counterexample.gain, ratio(1, 2));

        for k in [2, 3, 4] {
            let v = universality_verdict(&BonusPlan::constant(k), &ints(&[0, 1, 2, 3]), s).unwrap();
            assert_eq!(v, UniversalityVerdict::ConstantOnGrid { points: 4 });
        }

        for plan in [BonusPlan::winner_take_all(3), BonusPlan::loser_take_all(3), BonusPlan::bounded_linear(3, int(2)).unwrap()] {
            let v = universality_verdict(&plan, &ints(&[0, 1, 2, 3]), s).unwrap();
            assert!(matches!(v, UniversalityVerdict::Counterexample { .. }), "{}", plan.kind_name());
        }

        assert!(matches!(
            universality_verdict(&BonusPlan::winner_take_all(3), &ints(&[0, 1]), s),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn verdict_json_shape() {
        let v = universality_verdict(&BonusPlan::winner_take_all(2), &ints(&[0, 1]), SearchSchedule::default()).unwrap();
        let json: serde_json::Value = serde_json::to_value(&v).unwrap();
        assert_eq!(json["verdict"], "counterexample");
        assert_eq!(json["construction"], "case_b");
        assert_eq!(json["p"], "5/6");
        assert_eq!(json["z"], "6");
        assert_eq!(json["gain"], "1/3");
        assert_eq!(json["violation"]["case"], "CaseB");
        let back = Market::from_json(&json["market"].to_string()).unwrap();
        let UniversalityVerdict::Counterexample { counterexample, .. } = &v else { panic!() };
        assert_eq!(back, counterexample.market);
    }
}
