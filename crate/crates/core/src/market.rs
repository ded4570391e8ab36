//! Finite markets: a sample space of weighted atoms and the actions
//! (random variables) defined on it, plus portfolio strategies over those
//! actions.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// Default bound on the number of atoms a product construction may create.
pub const DEFAULT_ATOM_CAP: u128 = 1_000_000;

/// One sample point: its probability and the value of every action there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    probability: Rational,
    outcomes: Vec<Rational>,
}

impl Atom {
    pub fn new(probability: Rational, outcomes: Vec<Rational>) -> Self {
        Atom { probability, outcomes }
    }

    pub fn probability(&self) -> &Rational {
        &self.probability
    }

    pub fn outcomes(&self) -> &[Rational] {
        &self.outcomes
    }

    /// Realized value of the portfolio `q` at this atom.
    pub fn portfolio_value(&self, q: &MixedAction) -> Rational {
        if let Some(i) = q.pure_index() {
            return self.outcomes[i].clone();
        }
        q.weights
            .iter()
            .zip(&self.outcomes)
            .filter(|(w, _)| !w.is_zero())
            .fold(Rational::zero(), |acc, (w, x)| acc + w * x)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Market {
    labels: Vec<String>,
    atoms: Vec<Atom>,
}

impl Market {
    /// Validates and builds a market. Probabilities must be positive and sum
    /// to exactly one; every atom must carry one outcome per action.
    pub fn new(labels: Vec<String>, atoms: Vec<Atom>) -> Result<Self> {
        if labels.is_empty() || atoms.is_empty() {
            return Err(Error::EmptyMarket);
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        for (index, atom) in atoms.iter().enumerate() {
            if atom.outcomes.len() != labels.len() {
                return Err(Error::ArityMismatch {
                    expected: labels.len(),
                    found: atom.outcomes.len(),
                });
            }
            if !atom.probability.is_positive() {
                return Err(Error::NonPositiveProbability {
                    atom: index,
                    probability: rational::format(&atom.probability),
                });
            }
        }
        let total = rational::sum(atoms.iter().map(|a| &a.probability));
        if !total.is_one() {
            return Err(Error::NonUnitMass { total: rational::format(&total) });
        }
        Ok(Market { labels, atoms })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn num_actions(&self) -> usize {
        self.labels.len()
    }

    pub fn action_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn check_arity(&self, q: &MixedAction) -> Result<()> {
        if q.len() != self.num_actions() {
            return Err(Error::ArityMismatch { expected: self.num_actions(), found: q.len() });
        }
        Ok(())
    }

    /// `E[q] = sum over atoms of Pr(w) * sum_i q_i X_i(w)`.
    pub fn expectation(&self, q: &MixedAction) -> Result<Rational> {
        self.check_arity(q)?;
        Ok(self
            .atoms
            .iter()
            .fold(Rational::zero(), |acc, atom| acc + &atom.probability * atom.portfolio_value(q)))
    }

    pub fn action_expectation(&self, action: usize) -> Rational {
        self.atoms
            .iter()
            .fold(Rational::zero(), |acc, atom| acc + &atom.probability * &atom.outcomes[action])
    }

    pub fn action_expectations(&self) -> Vec<Rational> {
        (0..self.num_actions()).map(|i| self.action_expectation(i)).collect()
    }

    /// Actions attaining the maximal expectation, in index order.
    pub fn argmax_actions(&self) -> (Rational, Vec<usize>) {
        let expectations = self.action_expectations();
        let best = rational::max_of(&expectations).expect("market has at least one action");
        let argmax = expectations
            .iter()
            .enumerate()
            .filter(|(_, e)| **e == best)
            .map(|(i, _)| i)
            .collect();
        (best, argmax)
    }

    pub fn support_stats(&self) -> SupportStats {
        let values: BTreeSet<Rational> =
            self.atoms.iter().flat_map(|a| a.outcomes.iter().cloned()).collect();
        let lo = values.first().cloned().expect("markets are nonempty");
        let hi = values.last().cloned().expect("markets are nonempty");
        let bound = std::cmp::max(lo.abs(), hi.abs());
        SupportStats { values, interval: Interval { lo, hi }, bound }
    }

    pub fn to_file(&self) -> MarketFile {
        MarketFile {
            actions: self.labels.clone(),
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomFile {
                    p: rational::format(&a.probability),
                    outcomes: a.outcomes.iter().map(rational::format).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("market files always serialize")
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let file: MarketFile = serde_json::from_str(text)?;
        Ok(build_market(&file)?)
    }
}

/// On-disk market description. Numbers are `"a/b"` or exact decimals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketFile {
    pub actions: Vec<String>,
    pub atoms: Vec<AtomFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomFile {
    pub p: String,
    pub outcomes: Vec<String>,
}

pub fn build_market(spec: &MarketFile) -> Result<Market> {
    let atoms = spec
        .atoms
        .iter()
        .map(|a| {
            let probability = rational::parse(&a.p)?;
            let outcomes = a.outcomes.iter().map(|o| rational::parse(o)).collect::<Result<_>>()?;
            Ok(Atom::new(probability, outcomes))
        })
        .collect::<Result<Vec<_>>>()?;
    Market::new(spec.actions.clone(), atoms)
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "rational::as_string")]
    pub lo: Rational,
    #[serde(with = "rational::as_string")]
    pub hi: Rational,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, v: &Rational) -> bool {
        self.lo <= *v && *v <= self.hi
    }

    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", rational::display(&self.lo), rational::display(&self.hi))
    }
}

/// Union of supports `S_A`, its hull `I_A`, and the absolute bound `M_A`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportStats {
    pub values: BTreeSet<Rational>,
    pub interval: Interval,
    pub bound: Rational,
}

/// A portfolio: simplex weights over the market's actions, realized
/// pointwise as `q(w) = sum_i q_i X_i(w)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct MixedAction {
    #[serde(with = "rational::vec_as_strings")]
    weights: Vec<Rational>,
}

impl MixedAction {
    pub fn new(weights: Vec<Rational>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::NonSimplexWeights("no weights".into()));
        }
        if let Some(w) = weights.iter().find(|w| !rational::in_unit_interval(w)) {
            return Err(Error::NonSimplexWeights(format!(
                "weight {} outside [0, 1]",
                rational::format(w)
            )));
        }
        let total = rational::sum(&weights);
        if !total.is_one() {
            return Err(Error::NonSimplexWeights(format!(
                "weights sum to {}",
                rational::format(&total)
            )));
        }
        Ok(MixedAction { weights })
    }

    pub fn pure(action: usize, n: usize) -> Self {
        assert!(action < n, "action {action} out of range for {n} actions");
        let weights = (0..n)
            .map(|i| if i == action { Rational::one() } else { Rational::zero() })
            .collect();
        MixedAction { weights }
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn pure_index(&self) -> Option<usize> {
        self.weights.iter().position(|w| w.is_one())
    }

    /// All points of the simplex whose weights have denominator `d`, in
    /// lexicographically ascending order of the weight vector.
    pub fn grid(n: usize, d: u32) -> Vec<MixedAction> {
        assert!(n >= 1 && d >= 1);
        let mut out = Vec::new();
        let mut parts = vec![0u32; n];
        fill_compositions(&mut parts, 0, d, &mut |parts| {
            let weights = parts.iter().map(|&p| rational::ratio(p as i64, d as i64)).collect();
            out.push(MixedAction { weights });
        });
        out
    }
}

fn fill_compositions(parts: &mut [u32], at: usize, remaining: u32, emit: &mut impl FnMut(&[u32])) {
    if at == parts.len() - 1 {
        parts[at] = remaining;
        emit(parts);
        return;
    }
    for p in 0..=remaining {
        parts[at] = p;
        fill_compositions(parts, at + 1, remaining - p, emit);
    }
}

impl fmt::Display for MixedAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<_> = self.weights.iter().map(rational::display).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// One strategy per player.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Profile {
    players: Vec<MixedAction>,
}

impl Profile {
    pub fn new(players: Vec<MixedAction>) -> Result<Self> {
        if players.len() < 2 {
            return Err(Error::ArityMismatch { expected: 2, found: players.len() });
        }
        let n = players[0].len();
        if let Some(bad) = players.iter().find(|q| q.len() != n) {
            return Err(Error::ArityMismatch { expected: n, found: bad.len() });
        }
        Ok(Profile { players })
    }

    pub fn pure(actions: &[usize], n: usize) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a >= n) {
            return Err(Error::ArityMismatch { expected: n, found: a + 1 });
        }
        Profile::new(actions.iter().map(|&a| MixedAction::pure(a, n)).collect())
    }

    /// Builds a profile from rows of rational strings, as stored in profile files.
    pub fn from_rows(rows: &[Vec<String>]) -> Result<Self> {
        let players = rows
            .iter()
            .map(|row| {
                let weights = row.iter().map(|s| rational::parse(s)).collect::<Result<_>>()?;
                MixedAction::new(weights)
            })
            .collect::<Result<_>>()?;
        Profile::new(players)
    }

    pub fn players(&self) -> &[MixedAction] {
        &self.players
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn num_actions(&self) -> usize {
        self.players[0].len()
    }

    pub fn with_player(&self, player: usize, q: MixedAction) -> Profile {
        let mut players = self.players.clone();
        players[player] = q;
        Profile { players }
    }

    /// Pure action indices when every player plays a pure action.
    pub fn pure_actions(&self) -> Option<Vec<usize>> {
        self.players.iter().map(MixedAction::pure_index).collect()
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<_> = self.players.iter().map(|q| q.to_string()).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Outcome of an extra action at a coordinate tuple; `None` where undefined.
pub type TupleMap = Box<dyn Fn(&[Rational]) -> Option<Rational> + Send + Sync>;

/// An extra action of a product market, defined pointwise on coordinate
/// tuples.
pub struct ExtraAction {
    pub label: String,
    pub map: TupleMap,
}

impl ExtraAction {
    pub fn new(
        label: impl Into<String>,
        map: impl Fn(&[Rational]) -> Option<Rational> + Send + Sync + 'static,
    ) -> Self {
        ExtraAction { label: label.into(), map: Box::new(map) }
    }
}

/// Market on `support^copies` with product probabilities. Action `j` for
/// `j < copies` is the `j`-th coordinate (labelled `X1..Xk`), followed by
/// one column per extra action.
pub fn product_market(
    marginal: &[(Rational, Rational)],
    copies: usize,
    extras: &[ExtraAction],
    atom_cap: u128,
) -> Result<Market> {
    if marginal.is_empty() || copies == 0 {
        return Err(Error::EmptyMarket);
    }
    let total = rational::sum(marginal.iter().map(|(_, p)| p));
    if !total.is_one() {
        return Err(Error::NonUnitMass { total: rational::format(&total) });
    }
    if let Some((i, (_, p))) = marginal.iter().enumerate().find(|(_, (_, p))| !p.is_positive()) {
        return Err(Error::NonPositiveProbability { atom: i, probability: rational::format(p) });
    }
    let atoms_needed = (marginal.len() as u128).checked_pow(copies as u32).unwrap_or(u128::MAX);
    if atoms_needed > atom_cap {
        return Err(Error::AtomCapExceeded { atoms: atoms_needed, cap: atom_cap });
    }

    let mut labels: Vec<String> = (1..=copies).map(|j| format!("X{j}")).collect();
    labels.extend(extras.iter().map(|e| e.label.clone()));

    let mut atoms = Vec::with_capacity(atoms_needed as usize);
    let mut index = vec![0usize; copies];
    loop {
        let coords: Vec<Rational> = index.iter().map(|&i| marginal[i].0.clone()).collect();
        let probability =
            index.iter().fold(Rational::one(), |acc, &i| acc * &marginal[i].1);
        let mut outcomes = coords.clone();
        for extra in extras {
            let value = (extra.map)(&coords).ok_or_else(|| Error::IncompleteMapping {
                action: extra.label.clone(),
                point: format_tuple(&coords),
            })?;
            outcomes.push(value);
        }
        atoms.push(Atom::new(probability, outcomes));

        // odometer, last coordinate fastest
        let mut pos = copies;
        loop {
            if pos == 0 {
                return Market::new(labels, atoms);
            }
            pos -= 1;
            index[pos] += 1;
            if index[pos] < marginal.len() {
                break;
            }
            index[pos] = 0;
        }
    }
}

pub(crate) fn format_tuple(values: &[Rational]) -> String {
    let parts: Vec<_> = values.iter().map(rational::display).collect();
    format!("({})", parts.join(", "))
}

/// The two-bond market: `X1` pays 1.05 surely, `X2` pays 1.051 w.p. 3/5
/// and 1.0 w.p. 2/5. `X1` is constant, so the coupling is immaterial.
pub fn section2_market() -> Market {
    let atoms = vec![
        Atom::new(rational::ratio(3, 5), vec![rational::ratio(21, 20), rational::ratio(1051, 1000)]),
        Atom::new(rational::ratio(2, 5), vec![rational::ratio(21, 20), rational::int(1)]),
    ];
    Market::new(vec!["X1".into(), "X2".into()], atoms).expect("fixed market is valid")
}
