//! The k-player game a bonus plan induces on a market.
//!
//! Payoffs are exact. Player `i`'s payoff at a realized outcome vector `r`
//! is `lambda * e_i(r) + (1 - lambda) * f_i(r)`, where the earnings term
//! `e_i` is chosen by [`EarningsTerm`]. `lambda = 0` gives the plain
//! fixed-sum game.

use std::fmt;
use std::sync::OnceLock;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{Market, MixedAction, Profile};
use crate::plans::BonusPlan;
use crate::rational::{self, Rational};

pub const DEFAULT_TENSOR_CAP: u128 = 1_000_000;

/// What the `lambda` weight multiplies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EarningsTerm {
    /// Mean realized value of the other players. This is the convention
    /// behind the published two-bond payoff table.
    #[default]
    Rivals,
    /// The player's own realized value.
    Own,
}

impl EarningsTerm {
    fn value(self, player: usize, r: &[Rational]) -> Rational {
        match self {
            EarningsTerm::Own => r[player].clone(),
            EarningsTerm::Rivals => {
                let others = rational::sum(r) - &r[player];
                others / rational::int(r.len() as i64 - 1)
            }
        }
    }
}

/// Which deviations a best-response search considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// Pure actions only.
    PureOnly,
    /// Pure actions plus every simplex point with denominator `d`.
    Grid(u32),
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::PureOnly => f.write_str("pure"),
            Resolution::Grid(d) => write!(f, "grid 1/{d}"),
        }
    }
}

/// How a best response was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SearchMethod {
    /// The deviation payoff is affine in the portfolio weights on this
    /// market, so its maximum sits at a pure action and the pure scan is a
    /// complete search.
    PureSufficient,
    /// Pure actions only: complete for the finite game whose strategies are
    /// the pure actions.
    PureActions,
    /// Pure actions and a simplex grid; a bounded search.
    Grid { resolution: u32 },
}

impl fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchMethod::PureSufficient => f.write_str("pure-sufficient"),
            SearchMethod::PureActions => f.write_str("pure-actions"),
            SearchMethod::Grid { resolution } => write!(f, "grid 1/{resolution}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BestResponse {
    pub strategy: MixedAction,
    #[serde(with = "rational::as_string")]
    pub value: Rational,
    pub method: SearchMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Equilibrium,
    NotEquilibrium,
    NoViolationAtResolution,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Equilibrium => "equilibrium",
            Verdict::NotEquilibrium => "not an equilibrium",
            Verdict::NoViolationAtResolution => "no violation found at this resolution",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlayerCheck {
    pub player: usize,
    #[serde(with = "rational::as_string")]
    pub current: Rational,
    /// Payoff of each pure deviation, by action index.
    #[serde(with = "rational::vec_as_strings")]
    pub pure_values: Vec<Rational>,
    pub best: BestResponse,
    /// `best.value - current`; positive exactly when the player can gain.
    #[serde(with = "rational::as_string")]
    pub gain: Rational,
    /// Whether the search rules out every deviation, not just those tried.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EquilibriumReport {
    pub profile: Profile,
    pub verdict: Verdict,
    pub resolution: Resolution,
    pub players: Vec<PlayerCheck>,
}

impl EquilibriumReport {
    /// The player with the largest strictly positive gain, if any.
    pub fn best_violation(&self) -> Option<&PlayerCheck> {
        self.players.iter().filter(|p| p.gain.is_positive()).max_by(|a, b| a.gain.cmp(&b.gain))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dominance {
    pub player: usize,
    pub dominant: usize,
    pub dominated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EliminationStep {
    pub round: usize,
    pub player: usize,
    pub eliminated: usize,
    pub dominated_by: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DominanceReport {
    /// Strict dominance among all pure actions of the full game.
    pub relations: Vec<Dominance>,
    pub trace: Vec<EliminationStep>,
    /// Actions surviving iterated elimination, per player.
    pub survivors: Vec<Vec<usize>>,
}

impl DominanceReport {
    pub fn surviving_profiles(&self) -> Vec<Vec<usize>> {
        cartesian(&self.survivors)
    }

    pub fn unique_survivor(&self) -> Option<Vec<usize>> {
        let profiles = self.surviving_profiles();
        (profiles.len() == 1).then(|| profiles.into_iter().next().unwrap())
    }

    pub fn dominates(&self, player: usize, dominant: usize, dominated: usize) -> bool {
        self.relations.contains(&Dominance { player, dominant, dominated })
    }
}

pub struct Game<'a> {
    market: &'a Market,
    plan: &'a BonusPlan,
    lambda: Rational,
    earnings: EarningsTerm,
    // filled on first access, row-major over pure profiles
    tensor: Vec<OnceLock<Vec<Rational>>>,
}

/// Builds the game with the default tensor cap.
pub fn induce_game<'a>(market: &'a Market, plan: &'a BonusPlan, lambda: Rational) -> Result<Game<'a>> {
    Game::induce(market, plan, lambda, EarningsTerm::default(), DEFAULT_TENSOR_CAP)
}

impl<'a> Game<'a> {
    pub fn induce(
        market: &'a Market,
        plan: &'a BonusPlan,
        lambda: Rational,
        earnings: EarningsTerm,
        tensor_cap: u128,
    ) -> Result<Self> {
        if lambda.is_negative() || lambda >= rational::one() {
            return Err(Error::InvalidLambda(rational::format(&lambda)));
        }
        let n = market.num_actions();
        let k = plan.players();
        let profiles = (n as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
        if profiles > tensor_cap {
            return Err(Error::TensorCapExceeded { profiles, cap: tensor_cap });
        }
        let tensor = (0..profiles).map(|_| OnceLock::new()).collect();
        let game = Game { market, plan, lambda, earnings, tensor };
        Ok(game)
    }

    pub fn market(&self) -> &Market {
        self.market
    }

    pub fn plan(&self) -> &BonusPlan {
        self.plan
    }

    pub fn lambda(&self) -> &Rational {
        &self.lambda
    }

    pub fn earnings(&self) -> EarningsTerm {
        self.earnings
    }

    pub fn players(&self) -> usize {
        self.plan.players()
    }

    pub fn num_actions(&self) -> usize {
        self.market.num_actions()
    }

    fn index_of(&self, actions: &[usize]) -> usize {
        let n = self.num_actions();
        actions.iter().fold(0, |acc, &a| acc * n + a)
    }

    /// Expected payoff vector of a pure profile.
    pub fn entry(&self, actions: &[usize]) -> Result<&[Rational]> {
        if actions.len() != self.players() {
            return Err(Error::ArityMismatch { expected: self.players(), found: actions.len() });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.num_actions()) {
            return Err(Error::ArityMismatch { expected: self.num_actions(), found: a + 1 });
        }
        Ok(self.cached(actions))
    }

    fn cached(&self, actions: &[usize]) -> &[Rational] {
        self.tensor[self.index_of(actions)].get_or_init(|| self.pure_payoffs(actions))
    }

    /// Pure profiles in row-major order, matching the tensor layout.
    pub fn pure_profiles(&self) -> Vec<Vec<usize>> {
        cartesian(&vec![(0..self.num_actions()).collect::<Vec<_>>(); self.players()])
    }

    fn pure_payoffs(&self, actions: &[usize]) -> Vec<Rational> {
        let k = actions.len();
        let mut totals = vec![Rational::zero(); k];
        let keep = rational::one() - &self.lambda;
        for atom in self.market.atoms() {
            let r: Vec<Rational> = actions.iter().map(|&a| atom.outcomes()[a].clone()).collect();
            let shares = self.plan.evaluate(&r).expect("plan arity checked").into_shares();
            for i in 0..k {
                let u = &self.lambda * self.earnings.value(i, &r) + &keep * &shares[i];
                totals[i] += atom.probability() * u;
            }
        }
        totals
    }

    fn check_profile(&self, profile: &Profile) -> Result<()> {
        if profile.num_players() != self.players() {
            return Err(Error::ArityMismatch { expected: self.players(), found: profile.num_players() });
        }
        if profile.num_actions() != self.num_actions() {
            return Err(Error::ArityMismatch { expected: self.num_actions(), found: profile.num_actions() });
        }
        Ok(())
    }

    fn check_player(&self, player: usize) -> Result<()> {
        if player >= self.players() {
            return Err(Error::PlayerOutOfRange { player, players: self.players() });
        }
        Ok(())
    }

    /// Expected payoffs with every portfolio realized atom by atom; the
    /// plan sees the realized portfolio values.
    pub fn expected_payoffs(&self, profile: &Profile) -> Result<Vec<Rational>> {
        self.check_profile(profile)?;
        if let Some(actions) = profile.pure_actions() {
            return Ok(self.cached(&actions).to_vec());
        }
        let k = self.players();
        let mut totals = vec![Rational::zero(); k];
        let keep = rational::one() - &self.lambda;
        for atom in self.market.atoms() {
            let r: Vec<Rational> = profile.players().iter().map(|q| atom.portfolio_value(q)).collect();
            let shares = self.plan.evaluate(&r)?.into_shares();
            for i in 0..k {
                totals[i] += atom.probability() * (&self.lambda * self.earnings.value(i, &r) + &keep * &shares[i]);
            }
        }
        Ok(totals)
    }

    /// Realized outcome vectors of `profile`, one per atom.
    fn realized(&self, profile: &Profile) -> Vec<Vec<Rational>> {
        self.market
            .atoms()
            .iter()
            .map(|atom| profile.players().iter().map(|q| atom.portfolio_value(q)).collect())
            .collect()
    }

    fn deviation_value(&self, player: usize, realized: &mut [Vec<Rational>], q: &MixedAction) -> Rational {
        let keep = rational::one() - &self.lambda;
        let mut total = Rational::zero();
        for (atom, r) in self.market.atoms().iter().zip(realized.iter_mut()) {
            let t = atom.portfolio_value(q);
            r[player] = t;
            let share = self.plan.share(player, r).expect("arity checked");
            total += atom.probability() * (&self.lambda * self.earnings.value(player, r) + &keep * share);
        }
        total
    }

    /// Whether `player`'s payoff against the rest of `profile` is affine in
    /// the deviation weights. Every portfolio value at an atom lies between
    /// the smallest and largest action outcome there, so affinity of the
    /// plan along those segments suffices.
    pub fn pure_sufficient(&self, player: usize, profile: &Profile) -> Result<bool> {
        self.check_profile(profile)?;
        self.check_player(player)?;
        let realized = self.realized(profile);
        Ok(self.market.atoms().iter().zip(&realized).all(|(atom, r)| {
            let lo = atom.outcomes().iter().min().expect("nonempty");
            let hi = atom.outcomes().iter().max().expect("nonempty");
            self.plan.affine_along(player, r, lo, hi)
        }))
    }

    /// Best deviation for `player` against the other strategies in
    /// `profile`. Ties go to the lowest pure action, then to the
    /// lexicographically smallest grid point.
    pub fn best_response(&self, player: usize, profile: &Profile, resolution: Resolution) -> Result<BestResponse> {
        Ok(self.search(player, profile, resolution)?.0)
    }

    fn search(&self, player: usize, profile: &Profile, resolution: Resolution) -> Result<(BestResponse, Vec<Rational>)> {
        self.check_profile(profile)?;
        self.check_player(player)?;
        let n = self.num_actions();
        let mut realized = self.realized(profile);
        let pure_values: Vec<Rational> = (0..n)
            .map(|a| self.deviation_value(player, &mut realized, &MixedAction::pure(a, n)))
            .collect();
        let mut best_action = 0;
        for (a, v) in pure_values.iter().enumerate() {
            if *v > pure_values[best_action] {
                best_action = a;
            }
        }
        let mut best =
            BestResponse { strategy: MixedAction::pure(best_action, n), value: pure_values[best_action].clone(), method: SearchMethod::PureActions };
        if self.pure_sufficient(player, profile)? {
            best.method = SearchMethod::PureSufficient;
            return Ok((best, pure_values));
        }
        if let Resolution::Grid(d) = resolution {
            best.method = SearchMethod::Grid { resolution: d };
            for q in MixedAction::grid(n, d) {
                if q.pure_index().is_some() {
                    continue;
                }
                let v = self.deviation_value(player, &mut realized, &q);
                if v > best.value {
                    best.value = v;
                    best.strategy = q;
                }
            }
        }
        Ok((best, pure_values))
    }

    pub fn check_nash(&self, profile: &Profile, resolution: Resolution) -> Result<EquilibriumReport> {
        let current = self.expected_payoffs(profile)?;
        let all_pure = profile.pure_actions().is_some();
        let mut players = Vec::with_capacity(self.players());
        for (player, current) in current.into_iter().enumerate() {
            let (best, pure_values) = self.search(player, profile, resolution)?;
            let complete = match best.method {
                SearchMethod::PureSufficient => true,
                SearchMethod::PureActions => all_pure,
                SearchMethod::Grid { .. } => false,
            };
            let gain = &best.value - &current;
            players.push(PlayerCheck { player, current, pure_values, best, gain, complete });
        }
        let verdict = if players.iter().any(|p| p.gain.is_positive()) {
            Verdict::NotEquilibrium
        } else if players.iter().all(|p| p.complete) {
            Verdict::Equilibrium
        } else {
            Verdict::NoViolationAtResolution
        };
        Ok(EquilibriumReport { profile: profile.clone(), verdict, resolution, players })
    }

    /// Strict dominance between pure actions and iterated elimination of
    /// strictly dominated actions.
    pub fn strict_dominance(&self) -> DominanceReport {
        let n = self.num_actions();
        let k = self.players();
        let all: Vec<Vec<usize>> = vec![(0..n).collect(); k];

        let mut relations = Vec::new();
        for player in 0..k {
            for a in 0..n {
                for b in 0..n {
                    if a != b && self.strictly_dominates(player, a, b, &all) {
                        relations.push(Dominance { player, dominant: a, dominated: b });
                    }
                }
            }
        }

        let mut survivors = all;
        let mut trace = Vec::new();
        let mut round = 0;
        loop {
            round += 1;
            let mut removals = Vec::new();
            for player in 0..k {
                for &b in &survivors[player] {
                    let by = survivors[player]
                        .iter()
                        .copied()
                        .find(|&a| a != b && self.strictly_dominates(player, a, b, &survivors));
                    if let Some(a) = by {
                        removals.push(EliminationStep { round, player, eliminated: b, dominated_by: a });
                    }
                }
            }
            if removals.is_empty() {
                break;
            }
            for step in &removals {
                survivors[step.player].retain(|&x| x != step.eliminated);
            }
            trace.extend(removals);
        }
        DominanceReport { relations, trace, survivors }
    }

    fn strictly_dominates(&self, player: usize, a: usize, b: usize, sets: &[Vec<usize>]) -> bool {
        let mut opponents: Vec<Vec<usize>> = sets.to_vec();
        opponents[player] = vec![usize::MAX];
        cartesian(&opponents).into_iter().all(|mut actions| {
            actions[player] = a;
            let with_a = self.cached(&actions)[player].clone();
            actions[player] = b;
            with_a > self.cached(&actions)[player]
        })
    }
}

/// The decision maker's value: total expected realized earnings.
pub fn dm_value(market: &Market, profile: &Profile) -> Result<Rational> {
    profile
        .players()
        .iter()
        .try_fold(Rational::zero(), |acc, q| Ok(acc + market.expectation(q)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimalityVerdict {
    Optimal,
    /// No checked profile was refuted, but none was fully certified.
    NoViolationAtResolution,
    NotOptimalAmongCheckedProfiles,
}

impl fmt::Display for OptimalityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimalityVerdict::Optimal => "optimal",
            OptimalityVerdict::NoViolationAtResolution => "no violation found at this resolution",
            OptimalityVerdict::NotOptimalAmongCheckedProfiles => "not optimal among checked profiles",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OptimalityReport {
    #[serde(with = "rational::as_string")]
    pub mu_star: Rational,
    pub argmax: Vec<usize>,
    /// Several actions share the top expectation; mixed equilibria among
    /// them are not examined.
    pub expectation_tie: bool,
    pub checked: Vec<EquilibriumReport>,
    pub verdict: OptimalityVerdict,
}

/// Checks whether some pure profile over the top-expectation actions is an
/// equilibrium of the plain (`lambda = 0`) game.
pub fn check_optimal(
    market: &Market,
    plan: &BonusPlan,
    resolution: Resolution,
    tensor_cap: u128,
) -> Result<OptimalityReport> {
    let game = Game::induce(market, plan, Rational::zero(), EarningsTerm::default(), tensor_cap)?;
    let (mu_star, argmax) = market.argmax_actions();
    let n = market.num_actions();
    let mut checked = Vec::new();
    for actions in cartesian(&vec![argmax.clone(); plan.players()]) {
        let profile = Profile::pure(&actions, n)?;
        checked.push(game.check_nash(&profile, resolution)?);
    }
    let verdict = if checked.iter().any(|r| r.verdict == Verdict::Equilibrium) {
        OptimalityVerdict::Optimal
    } else if checked.iter().any(|r| r.verdict == Verdict::NoViolationAtResolution) {
        OptimalityVerdict::NoViolationAtResolution
    } else {
        OptimalityVerdict::NotOptimalAmongCheckedProfiles
    };
    Ok(OptimalityReport { mu_star, expectation_tie: argmax.len() > 1, argmax, checked, verdict })
}

/// Cartesian product of index sets, last set varying fastest.
pub(crate) fn cartesian(sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::with_capacity(sets.len())];
    for set in sets {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                set.iter().map(move |&x| {
                    let mut next = prefix.clone();
                    next.push(x);
                    next
                })
            })
            .collect();
    }
    out
}
