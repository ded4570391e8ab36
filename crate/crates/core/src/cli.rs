//! Command-line front end.
//!
//! Every subcommand prints either a human-readable report or, with
//! `--json`, a JSON document whose numbers are exact rational strings.
//! Exit status: 0 on success, 1 on invalid input or a failed check, 2 on
//! usage errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::constructor::{build_bounded_linear, build_m_linear, find_bounding_m, MSearchResult};
use crate::error::Error;
use crate::game::{
    check_optimal, EarningsTerm, EquilibriumReport, Game, OptimalityReport, Resolution, DEFAULT_TENSOR_CAP,
};
use crate::impossibility::{parse_grid, universality_verdict_with_cap, Construction, SearchSchedule, UniversalityVerdict, Violation};
use crate::market::{section2_market, Interval, Market, Profile, DEFAULT_ATOM_CAP};
use crate::plans::{BonusPlan, PlanKind, SampleSpec, ValidationReport};
use crate::rational::{self, Rational};

#[derive(Debug, Parser)]
#[command(name = "bonus-plans", version, about = "Bonus-plan games over finite markets")]
struct Cli {
    /// Emit JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    /// Show approximate decimals (six places, prefixed by `~`) in tables.
    #[arg(long, global = true)]
    decimal: bool,
    /// Largest product market a counterexample builder may create.
    #[arg(long, global = true, default_value_t = DEFAULT_ATOM_CAP)]
    atom_cap: u128,
    /// Largest number of pure profiles a game may have.
    #[arg(long, global = true, default_value_t = DEFAULT_TENSOR_CAP)]
    tensor_cap: u128,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Earnings {
    Rivals,
    Own,
}

impl From<Earnings> for EarningsTerm {
    fn from(e: Earnings) -> Self {
        match e {
            Earnings::Rivals => EarningsTerm::Rivals,
            Earnings::Own => EarningsTerm::Own,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// The two-bond winner-take-all game and its dominance solution.
    ReplicateExample {
        #[arg(long, default_value = "1/2", value_parser = parse_rational)]
        lambda: Rational,
        #[arg(long, value_enum, default_value = "rivals")]
        earnings: Earnings,
    },
    /// Print the payoff tensor of the game a plan induces on a market.
    Induce {
        #[arg(long)]
        market: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "0", value_parser = parse_rational)]
        lambda: Rational,
        #[arg(long, value_enum, default_value = "rivals")]
        earnings: Earnings,
    },
    /// Check whether a profile is an equilibrium.
    CheckEq {
        #[arg(long)]
        market: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// JSON list of weight vectors, one per player.
        #[arg(long)]
        profile: PathBuf,
        /// `pure` or a grid denominator.
        #[arg(long, default_value = "pure", value_parser = parse_resolution)]
        resolution: Resolution,
        #[arg(long, default_value = "0", value_parser = parse_rational)]
        lambda: Rational,
        #[arg(long, value_enum, default_value = "rivals")]
        earnings: Earnings,
    },
    /// Check whether the plan is optimal on the market.
    CheckOptimal {
        #[arg(long)]
        market: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Must agree with the plan's dimension when given.
        #[arg(long)]
        players: Option<usize>,
        #[arg(long, default_value = "pure", value_parser = parse_resolution)]
        resolution: Resolution,
    },
    /// Build the linear plan scaled to the market's support.
    BuildLinear {
        #[arg(long)]
        market: PathBuf,
        #[arg(long)]
        players: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the bounded-linear plan from a grid search for its bound.
    BuildBounded {
        #[arg(long)]
        market: PathBuf,
        #[arg(long)]
        players: usize,
        /// Simplex grid denominator.
        #[arg(long)]
        grid: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search the bound for the bounded-linear plan.
    FindM {
        #[arg(long)]
        market: PathBuf,
        #[arg(long)]
        grid: u32,
    },
    /// Probe a plan for monotonicity failures and build a counterexample.
    ProbeUniversal {
        #[arg(long)]
        plan: PathBuf,
        /// `lo:hi:step`.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        players: Option<usize>,
        /// Iteration cap of the parameter searches.
        #[arg(long, default_value_t = SearchSchedule::default().cap)]
        cap: u32,
    },
    /// Evaluate a plan on random points and check its shares.
    ValidatePlan {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `lo:hi` range of the sampled coordinates.
        #[arg(long, default_value = "-10:10")]
        range: String,
    },
}

fn parse_rational(s: &str) -> Result<Rational, String> {
    rational::parse(s).map_err(|e| e.to_string())
}

fn parse_resolution(s: &str) -> Result<Resolution, String> {
    if s == "pure" {
        return Ok(Resolution::PureOnly);
    }
    match s.parse::<u32>() {
        Ok(d) if d >= 1 => Ok(Resolution::Grid(d)),
        _ => Err(format!("expected `pure` or a positive grid denominator, got `{s}`")),
    }
}

/// Runs the tool on `argv` (program name first), writing reports to `out`.
/// Returns the process exit status.
pub fn run(argv: &[String], out: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(std::io::stderr(), "{}", e.render());
            }
            return code;
        }
    };
    let json = cli.json;
    match execute(&cli, out) {
        Ok(status) => status,
        Err(e) => {
            let kind = e.downcast_ref::<Error>().map(error_kind).unwrap_or_else(|| "InvalidInput".into());
            let message = format!("{e:#}");
            if json {
                let _ = writeln!(out, "{}", json!({ "error": { "kind": kind, "message": message } }));
            } else {
                let _ = writeln!(std::io::stderr(), "error [{kind}]: {message}");
            }
            1
        }
    }
}

fn error_kind(e: &Error) -> String {
    let debug = format!("{e:?}");
    debug.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_market(path: &Path) -> anyhow::Result<Market> {
    Market::from_json(&read(path)?).with_context(|| format!("market file {}", path.display()))
}

fn load_plan(path: &Path) -> anyhow::Result<BonusPlan> {
    BonusPlan::from_json(&read(path)?).with_context(|| format!("plan file {}", path.display()))
}

fn load_profile(path: &Path) -> anyhow::Result<Profile> {
    let rows: Vec<Vec<Value>> = serde_json::from_str(&read(path)?)
        .with_context(|| format!("profile file {}: expected a list of weight vectors", path.display()))?;
    let rows = rows
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s),
                    Value::Number(n) => Ok(n.to_string()),
                    other => Err(anyhow!("weight {other} is not a number")),
                })
                .collect::<anyhow::Result<Vec<String>>>()
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Profile::from_rows(&rows)?)
}

struct Render {
    decimal: bool,
}

impl Render {
    fn num(&self, v: &Rational) -> String {
        if self.decimal {
            rational::approx(v)
        } else {
            rational::display(v)
        }
    }

    fn nums(&self, vs: &[Rational]) -> String {
        vs.iter().map(|v| self.num(v)).collect::<Vec<_>>().join(", ")
    }
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().enumerate().map(|(c, cell)| format!("{cell:<w$}", w = widths[c])).collect();
        s.push_str(cells.join("  ").trim_end());
        s.push('\n');
    }
    s
}

fn emit(out: &mut dyn Write, json: bool, value: &impl Serialize, text: impl FnOnce() -> String) -> anyhow::Result<()> {
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    } else {
        write!(out, "{}", text())?;
    }
    Ok(())
}

fn profile_labels(market: &Market, actions: &[usize]) -> String {
    let names: Vec<&str> = actions.iter().map(|&a| market.labels()[a].as_str()).collect();
    format!("({})", names.join(","))
}

fn execute(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    let r = Render { decimal: cli.decimal };
    match &cli.command {
        Command::ReplicateExample { lambda, earnings } => replicate(cli, &r, out, lambda, (*earnings).into()),
        Command::Induce { market, plan, lambda, earnings } => {
            let market = load_market(market)?;
            let plan = load_plan(plan)?;
            let game = Game::induce(&market, &plan, lambda.clone(), (*earnings).into(), cli.tensor_cap)?;
            let mut entries = Vec::new();
            let mut rows = vec![vec!["profile".to_string(), "payoffs".to_string()]];
            for actions in game.pure_profiles() {
                let payoffs = game.entry(&actions)?;
                rows.push(vec![profile_labels(&market, &actions), r.nums(payoffs)]);
                entries.push(json!({
                    "profile": actions.iter().map(|&a| market.labels()[a].clone()).collect::<Vec<_>>(),
                    "payoffs": payoffs.iter().map(rational::format).collect::<Vec<_>>(),
                }));
            }
            let doc = json!({
                "players": plan.players(),
                "plan": plan.kind_name(),
                "lambda": rational::format(lambda),
                "earnings": EarningsTerm::from(*earnings),
                "entries": entries,
            });
            emit(out, cli.json, &doc, || {
                format!("{} plan, {} players, lambda = {}\n\n{}", plan.kind_name(), plan.players(), r.num(lambda), table(&rows))
            })?;
            Ok(0)
        }
        Command::CheckEq { market, plan, profile, resolution, lambda, earnings } => {
            let market = load_market(market)?;
            let plan = load_plan(plan)?;
            let profile = load_profile(profile)?;
            let game = Game::induce(&market, &plan, lambda.clone(), (*earnings).into(), cli.tensor_cap)?;
            let report = game.check_nash(&profile, *resolution)?;
            emit(out, cli.json, &report, || render_equilibrium(&r, &market, &report))?;
            Ok(0)
        }
        Command::CheckOptimal { market, plan, players, resolution } => {
            let market = load_market(market)?;
            let plan = load_plan(plan)?;
            if let Some(k) = players {
                if *k != plan.players() {
                    return Err(Error::ArityMismatch { expected: plan.players(), found: *k }.into());
                }
            }
            let report = check_optimal(&market, &plan, *resolution, cli.tensor_cap)?;
            emit(out, cli.json, &report, || render_optimality(&r, &market, &report))?;
            Ok(0)
        }
        Command::BuildLinear { market, players, out: path } => {
            let market = load_market(market)?;
            let plan = build_m_linear(&market, *players)?;
            write_plan(cli, &r, out, &plan, path.as_deref(), None)
        }
        Command::BuildBounded { market, players, grid, out: path } => {
            let market = load_market(market)?;
            let search = find_bounding_m(&market, *grid)?;
            let plan = build_bounded_linear(&market, *players, *grid)?;
            write_plan(cli, &r, out, &plan, path.as_deref(), Some(&search))
        }
        Command::FindM { market, grid } => {
            let market = load_market(market)?;
            let search = find_bounding_m(&market, *grid)?;
            emit(out, cli.json, &search, || render_search(&r, &market, &search))?;
            Ok(0)
        }
        Command::ProbeUniversal { plan, grid, players, cap } => {
            let plan = load_plan(plan)?;
            if let Some(k) = players {
                if *k != plan.players() {
                    return Err(Error::ArityMismatch { expected: plan.players(), found: *k }.into());
                }
            }
            let points = parse_grid(grid)?;
            let verdict = universality_verdict_with_cap(&plan, &points, SearchSchedule { cap: *cap }, cli.atom_cap)?;
            emit(out, cli.json, &verdict, || render_verdict(&r, &verdict))?;
            Ok(0)
        }
        Command::ValidatePlan { plan, samples, seed, range } => {
            let plan = load_plan(plan)?;
            let (lo, hi) = range.split_once(':').ok_or_else(|| Error::InvalidGrid(format!("range `{range}`: expected lo:hi")))?;
            let (lo, hi) = (rational::parse(lo)?, rational::parse(hi)?);
            if hi < lo {
                return Err(Error::InvalidGrid(format!("range `{range}`: hi is below lo")).into());
            }
            let spec = SampleSpec { count: *samples, seed: *seed, range: Interval::new(lo, hi) };
            let report = plan.validate_simplex(&spec);
            emit(out, cli.json, &report, || render_validation(&r, &plan, &report))?;
            Ok(if report.passed() { 0 } else { 1 })
        }
    }
}

fn replicate(cli: &Cli, r: &Render, out: &mut dyn Write, lambda: &Rational, earnings: EarningsTerm) -> anyhow::Result<i32> {
    let market = section2_market();
    let plan = BonusPlan::winner_take_all(2);
    let at = |l: Rational| Game::induce(&market, &plan, l, earnings, cli.tensor_cap);
    let g0 = at(rational::zero())?;
    let half = at(rational::ratio(1, 2))?;
    let game = at(lambda.clone())?;
    let dominance = game.strict_dominance();

    let mut coefficients = Vec::new();
    let mut cells = vec![vec![String::new(); 3]; 3];
    let mut values = vec![vec![String::new(); 3]; 3];
    for (i, label) in market.labels().iter().enumerate() {
        cells[0][i + 1] = label.clone();
        cells[i + 1][0] = label.clone();
        values[0][i + 1] = label.clone();
        values[i + 1][0] = label.clone();
    }
    for actions in game.pure_profiles() {
        let base = g0.entry(&actions)?;
        let mid = half.entry(&actions)?;
        // each payoff is affine in lambda: a + b*lambda
        let slope: Vec<Rational> = base.iter().zip(mid).map(|(a, m)| (m - a) * rational::int(2)).collect();
        let affine: Vec<String> = base.iter().zip(&slope).map(|(a, b)| format!("{} + {}λ", r.num(a), r.num(b))).collect();
        cells[actions[0] + 1][actions[1] + 1] = affine.join(", ");
        values[actions[0] + 1][actions[1] + 1] = r.nums(game.entry(&actions)?);
        coefficients.push(json!({
            "profile": actions.iter().map(|&a| market.labels()[a].clone()).collect::<Vec<_>>(),
            "intercept": base.iter().map(rational::format).collect::<Vec<_>>(),
            "slope": slope.iter().map(rational::format).collect::<Vec<_>>(),
            "payoffs": game.entry(&actions)?.iter().map(rational::format).collect::<Vec<_>>(),
        }));
    }
    let verdict = match dominance.unique_survivor() {
        Some(actions) => format!("unique equilibrium {} by strict dominance", profile_labels(&market, &actions)),
        None => {
            let survivors: Vec<String> =
                dominance.surviving_profiles().iter().map(|a| profile_labels(&market, a)).collect();
            format!("no unique dominance solution; surviving profiles {}", survivors.join(" "))
        }
    };
    let doc = json!({
        "lambda": rational::format(lambda),
        "earnings": earnings,
        "table": coefficients,
        "dominance": dominance,
        "verdict": verdict,
    });
    emit(out, cli.json, &doc, || {
        let mut s = String::from("Two-bond game, winner-take-all\n\npayoffs as functions of λ\n");
        s += &table(&cells);
        s += &format!("\npayoffs at λ = {}\n", r.num(lambda));
        s += &table(&values);
        for step in &dominance.trace {
            s += &format!(
                "round {}: player {} drops {} (dominated by {})\n",
                step.round,
                step.player + 1,
                market.labels()[step.eliminated],
                market.labels()[step.dominated_by]
            );
        }
        s += &format!("verdict: {verdict}\n");
        s
    })?;
    Ok(0)
}

fn write_plan(
    cli: &Cli,
    r: &Render,
    out: &mut dyn Write,
    plan: &BonusPlan,
    path: Option<&Path>,
    search: Option<&MSearchResult>,
) -> anyhow::Result<i32> {
    let text = plan.to_json();
    let Some(path) = path else {
        writeln!(out, "{text}")?;
        return Ok(0);
    };
    std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    let doc = json!({
        "out": path.display().to_string(),
        "plan": serde_json::from_str::<Value>(&text)?,
        "search": search,
    });
    emit(out, cli.json, &doc, || {
        let detail = match plan.kind() {
            PlanKind::MLinear { bound, interval } => format!("M = {}, interval {}", r.num(bound), interval),
            PlanKind::BoundedLinear { bound } => format!("M = {}", r.num(bound)),
            _ => String::new(),
        };
        format!("wrote {} plan for {} players ({detail}) to {}\n", plan.kind_name(), plan.players(), path.display())
    })?;
    Ok(0)
}

fn render_equilibrium(r: &Render, market: &Market, report: &EquilibriumReport) -> String {
    let mut rows = vec![["player", "current", "best deviation", "value", "gain", "search"].map(String::from).to_vec()];
    for p in &report.players {
        let strategy = match p.best.strategy.pure_index() {
            Some(a) => market.labels()[a].clone(),
            None => format!("[{}]", r.nums(p.best.strategy.weights())),
        };
        rows.push(vec![
            (p.player + 1).to_string(),
            r.num(&p.current),
            strategy,
            r.num(&p.best.value),
            r.num(&p.gain),
            p.best.method.to_string(),
        ]);
    }
    format!("profile {}\n\n{}\nverdict: {}\n", report.profile, table(&rows), report.verdict)
}

fn render_optimality(r: &Render, market: &Market, report: &OptimalityReport) -> String {
    let top: Vec<&str> = report.argmax.iter().map(|&a| market.labels()[a].as_str()).collect();
    let mut s = format!("top expectation {} attained by {}\n", r.num(&report.mu_star), top.join(", "));
    if report.expectation_tie {
        s += "several actions tie for the top expectation; mixed profiles among them are not examined\n";
    }
    s.push('\n');
    for check in &report.checked {
        s += &format!("{}: {}\n", check.profile, check.verdict);
        if let Some(v) = check.best_violation() {
            s += &format!("  player {} gains {} by deviating\n", v.player + 1, r.num(&v.gain));
        }
    }
    s += &format!("\nverdict: {}\n", report.verdict);
    s
}

fn render_search(r: &Render, market: &Market, search: &MSearchResult) -> String {
    let mut rows = vec![vec!["q".to_string(), "c_q".to_string(), "m".to_string()]];
    for w in &search.witnesses {
        rows.push(vec![format!("[{}]", r.nums(w.q.weights())), r.num(&w.c_q), r.num(&w.m)]);
    }
    format!(
        "reference action {}\ngrid 1/{}: c = {}, grid bound {}, range bound {}\nM = {}\n\n{}",
        market.labels()[search.reference],
        search.grid_resolution,
        r.num(&search.c),
        r.num(&search.grid_bound),
        r.num(&search.range_bound),
        r.num(&search.bound),
        table(&rows)
    )
}

fn render_verdict(r: &Render, verdict: &UniversalityVerdict) -> String {
    match verdict {
        UniversalityVerdict::ConstantOnGrid { points } => {
            format!("no violation on {points} grid points: the plan is constant on the grid\n")
        }
        UniversalityVerdict::Counterexample { violation, counterexample: ce } => {
            let mut s = match violation.as_ref() {
                Violation::Pair(v) => format!(
                    "{:?} violation for player {} at x = {}, y = {}, deficit {}\n",
                    v.case,
                    v.player + 1,
                    r.num(&v.x),
                    r.num(&v.y),
                    r.num(&v.deficit)
                ),
                Violation::OwnCoordinate(v) => format!(
                    "{:?} violation for player {} at {} with witness {}, deficit {}\n",
                    v.direction,
                    v.player + 1,
                    crate::market::format_tuple(&v.base),
                    r.num(&v.witness),
                    r.num(&v.deficit)
                ),
            };
            s += &match &ce.construction {
                Construction::CaseA => "single-atom market\n".to_string(),
                Construction::CaseB { delta, p, z, halvings } => format!(
                    "two-atom market with delta = {}, p = {}, z = {} ({halvings} halvings)\n",
                    r.num(delta),
                    r.num(p),
                    r.num(z)
                ),
                Construction::Decrease { pi_r } => {
                    format!("product market, {} atoms, base tuple mass {}\n", ce.market.atoms().len(), r.num(pi_r))
                }
                Construction::Increase { p, z_upper, z_lower, pi_r } => format!(
                    "product market, {} atoms, p = {}, z_up = {}, z_low = {}, base tuple mass {}\n",
                    ce.market.atoms().len(),
                    r.num(p),
                    r.num(z_upper),
                    r.num(z_lower),
                    r.num(pi_r)
                ),
            };
            s += "expectations:\n";
            for e in &ce.certificate {
                s += &format!("  {} {}\n", e.action, r.num(&e.expectation));
            }
            s += &format!(
                "profile {} is not an equilibrium: player {} gains {} by switching to {}\n",
                ce.profile,
                ce.player + 1,
                r.num(&ce.gain),
                ce.market.labels()[ce.deviation]
            );
            s
        }
    }
}

fn render_validation(r: &Render, plan: &BonusPlan, report: &ValidationReport) -> String {
    match &report.violation {
        None => format!("{} plan: {} points evaluated, all shares on the simplex\n", plan.kind_name(), report.evaluated),
        Some(v) => format!(
            "{} plan: shares ({}) at ({}) leave the simplex: {}\n",
            plan.kind_name(),
            r.nums(&v.shares),
            r.nums(&v.point),
            v.reason
        ),
    }
}
