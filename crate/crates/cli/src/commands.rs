//! The subcommands. Each returns an [`Outcome`]; none of them writes files.

use serde::Serialize;
use serde_json::{json, Value};
use spinekit::estimators::quadrature::normal_tail;
use spinekit::estimators::checks::{gibbs_check, ks_exponential, split_times, z_mean, zeta_tilde_mean};
use spinekit::estimators::{
    bounds_table, estimate_direct, estimate_spine, many_to_one_closed_form, many_to_two_closed_form, EstimateReport,
    ModelSpec, RunConfig, Statistic, SPINE_SEED_OFFSET,
};
use spinekit::laws::{martingale_check, MotionModel, OffspringLaw};
use spinekit::sim_ct::ContinuousModel;
use spinekit::sim_dt::{builtin_grid, oracle_lhs, run_grid, GridStatus, MomentConvention, SpineStatistic, ORACLE_BUDGET};
use spinekit::Execution;

use crate::config::{ConfigError, LoadedConfig, TimeMode};
use crate::output::{num, opt_num, Outcome};

/// Diagnostic mutations that deliberately break an identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Unsound {
    /// Spine particles branch at `R` instead of `m^j R`.
    WrongRate,
    /// Discrete weights take `m` once per skeleton edge instead of per node.
    PerEdgeM,
}

/// Everything a command needs besides its own arguments.
pub struct Context {
    pub cfg: LoadedConfig,
    pub seed: Option<u64>,
    pub exec: Execution,
    pub unsound: Vec<Unsound>,
}

impl Context {
    /// The master seed; there is no wall-clock fallback.
    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or_else(|| self.cfg.error("run.seed", "a seed is required: set run.seed or pass --seed"))
    }

    fn run_config(&self, seed: u64) -> RunConfig {
        let mut sim = self.cfg.sim_options();
        sim.unsound_spine_rate = self.unsound.contains(&Unsound::WrongRate);
        RunConfig {
            replicates: self.cfg.config.run.replicates,
            seed,
            exec: self.exec,
            sim,
            tuple_cap: self.cfg.config.run.tuple_cap,
            convention: self.convention(),
        }
    }

    fn convention(&self) -> MomentConvention {
        if self.unsound.contains(&Unsound::PerEdgeM) {
            MomentConvention::PerEdge
        } else {
            MomentConvention::PerNode
        }
    }

    /// The configuration as hashed: no worker count, no output block.
    fn canonical_config(&self) -> Value {
        let mut c = self.cfg.config.clone();
        c.run.workers = None;
        c.output = Default::default();
        serde_json::to_value(c).expect("config serializes")
    }
}

const REPORT_COLUMNS: [&str; 8] = [
    "label",
    "estimate",
    "std_error",
    "ci99_lo",
    "ci99_hi",
    "replicates",
    "target",
    "covers_target",
];

fn report_row(r: &EstimateReport, target: Option<f64>) -> Vec<String> {
    let covers = target.map(|t| r.covers99(t).to_string()).unwrap_or_default();
    vec![
        r.label.clone(),
        num(r.estimate),
        num(r.std_error),
        num(r.ci99[0]),
        num(r.ci99[1]),
        r.replicates.to_string(),
        opt_num(target),
        covers,
    ]
}

/// Whether the continuous closed forms apply: binary branching at rate 1
/// from 0, with Brownian motion (tilted or not, which only changes `Q`).
fn has_closed_form(model: &ContinuousModel) -> bool {
    model.law == OffspringLaw::point_mass(2)
        && model.rate.constant_value() == Some(1.0)
        && model.origin == 0.0
        && matches!(model.motion, MotionModel::Brownian | MotionModel::BrownianTilt { .. })
}

/// Exact value of the query when one is available: the Brownian closed
/// forms for `k <= 2`, or the discrete enumeration oracle within budget.
fn exact_value(spec: &ModelSpec, stat: &Statistic) -> spinekit::Result<Option<f64>> {
    let Statistic::Factored {
        factors,
        distinct: false,
    } = stat
    else {
        return Ok(None);
    };
    match spec {
        ModelSpec::Continuous { model, horizon } if has_closed_form(model) => match factors.as_slice() {
            [f] => many_to_one_closed_form(f, *horizon).map(Some),
            [f, g] => many_to_two_closed_form(f, g, *horizon).map(Some),
            _ => Ok(None),
        },
        ModelSpec::Continuous { .. } => Ok(None),
        ModelSpec::Discrete { model } => {
            let table = factors
                .iter()
                .map(|f| (0..model.chain.states()).map(|s| f.eval(s as f64)).collect())
                .collect();
            match oracle_lhs(model, &SpineStatistic::new(table)?, ORACLE_BUDGET) {
                Ok(v) => Ok(Some(v)),
                Err(spinekit::Error::BudgetExceeded { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        }
    }
}

fn estimation_setup(ctx: &Context) -> anyhow::Result<(u64, ModelSpec, Statistic, Option<f64>)> {
    let seed = ctx.seed()?;
    let spec = ctx.cfg.model_spec()?;
    let stat = ctx.cfg.statistic();
    let exact = exact_value(&spec, &stat)?;
    Ok((seed, spec, stat, exact))
}

/// Direct and spine estimates of the configured query. Passes when the two
/// 99% intervals overlap and both cover the exact value, if there is one.
pub fn estimate(ctx: &Context) -> anyhow::Result<Outcome> {
    let (seed, spec, stat, exact) = estimation_setup(ctx)?;
    let mut out = Outcome::new("estimate", REPORT_COLUMNS.to_vec());
    let mut result = json!({ "config": ctx.canonical_config(), "exact": exact });

    let direct = match estimate_direct(&spec, &stat, &ctx.run_config(seed)) {
        Ok(r) => r,
        Err(e) => {
            out.error = Some(e.to_string());
            out.result = result;
            return Ok(out);
        }
    };
    out.csv_rows.push(report_row(&direct, exact));
    result["direct"] = serde_json::to_value(&direct)?;
    let spine = match estimate_spine(&spec, &stat, &ctx.run_config(seed.wrapping_add(SPINE_SEED_OFFSET))) {
        Ok(r) => r,
        Err(e) => {
            out.error = Some(e.to_string());
            out.passed = false;
            out.result = result;
            return Ok(out);
        }
    };
    out.csv_rows.push(report_row(&spine, exact));
    let overlap = direct.overlaps99(&spine);
    let covered = exact.is_none_or(|x| direct.covers99(x) && spine.covers99(x));
    out.passed = overlap && covered;
    result["spine"] = serde_json::to_value(&spine)?;
    result["overlap99"] = json!(overlap);
    out.result = result;
    Ok(out)
}

/// Direct estimate only. Passes when it covers the exact value, if any.
pub fn direct(ctx: &Context) -> anyhow::Result<Outcome> {
    let (seed, spec, stat, exact) = estimation_setup(ctx)?;
    let mut out = Outcome::new("direct", REPORT_COLUMNS.to_vec());
    let mut result = json!({ "config": ctx.canonical_config(), "exact": exact });
    match estimate_direct(&spec, &stat, &ctx.run_config(seed)) {
        Ok(r) => {
            out.passed = exact.is_none_or(|x| r.covers99(x));
            out.csv_rows.push(report_row(&r, exact));
            result["direct"] = serde_json::to_value(&r)?;
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out.result = result;
    Ok(out)
}

/// Both sides of the discrete identity over the built-in grid, filtered by
/// the `grid` table.
pub fn verify_discrete(ctx: &Context) -> anyhow::Result<Outcome> {
    let grid = &ctx.cfg.config.grid;
    let cases: Vec<_> = builtin_grid()
        .into_iter()
        .filter(|c| grid.ks.as_ref().is_none_or(|ks| ks.contains(&c.model.k)))
        .filter(|c| grid.generations.as_ref().is_none_or(|ns| ns.contains(&c.model.generations)))
        .collect();
    let convention = ctx.convention();
    let results = run_grid(&cases, convention, ORACLE_BUDGET, &ctx.exec)?;
    let count = |s: GridStatus| results.iter().filter(|r| r.status == s).count();
    let (failed, skipped) = (count(GridStatus::Fail), count(GridStatus::Skipped));

    let mut out = Outcome::new(
        "verify-discrete",
        vec!["law", "k", "n", "chain", "zeta", "statistic", "lhs", "rhs", "abs_diff", "status", "note"],
    );
    for r in &results {
        out.csv_rows.push(vec![
            r.law.clone(),
            r.k.to_string(),
            r.n.to_string(),
            r.chain.clone(),
            r.zeta.clone(),
            r.statistic.clone(),
            opt_num(r.lhs),
            opt_num(r.rhs),
            opt_num(r.abs_diff),
            serde_json::to_value(r.status)?.as_str().unwrap_or_default().to_string(),
            r.note.clone(),
        ]);
    }
    out.passed = failed == 0;
    out.result = json!({
        "convention": convention,
        "cases": results.len(),
        "evaluated": results.len() - skipped,
        "skipped": skipped,
        "failed": failed,
        "results": results,
    });
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
struct CheckRow {
    check: &'static str,
    k: Option<usize>,
    t: Option<f64>,
    estimate: f64,
    std_error: Option<f64>,
    target: Option<f64>,
    passed: bool,
    detail: String,
}

impl CheckRow {
    fn csv(&self) -> Vec<String> {
        vec![
            self.check.to_string(),
            self.k.map(|k| k.to_string()).unwrap_or_default(),
            opt_num(self.t),
            num(self.estimate),
            opt_num(self.std_error),
            opt_num(self.target),
            self.passed.to_string(),
            self.detail.clone(),
        ]
    }
}

/// Two-sided normal quantile: the `z` with `P(|Z| > z) = alpha`.
fn two_sided_z(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 2.0 * normal_tail(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Normal-approximation interval `estimate +- z * std_error`, widened by
/// the same slack the reports use for zero-variance estimates.
fn interval(r: &EstimateReport, z: f64) -> [f64; 2] {
    let slack = 1e-12 * r.estimate.abs().max(1.0);
    [r.estimate - z * r.std_error - slack, r.estimate + z * r.std_error + slack]
}

fn covers(r: &EstimateReport, x: f64, z: f64) -> bool {
    let [lo, hi] = interval(r, z);
    lo <= x && x <= hi
}

fn interval_row(check: &'static str, k: usize, t: f64, r: &EstimateReport, target: Option<f64>, passed: bool, z: f64) -> CheckRow {
    let [lo, hi] = interval(r, z);
    CheckRow {
        check,
        k: Some(k),
        t: Some(t),
        estimate: r.estimate,
        std_error: Some(r.std_error),
        target,
        passed,
        detail: format!("interval [{}, {}] at z = {}", num(lo), num(hi), num(z)),
    }
}

/// Rate of the first split of two marks under `Q^2` for a constant branch
/// rate: marks ride a particle branching at `m^2 R`, whose size-biased
/// offspring separates them with probability `1 - 1/a`, so the rate is
/// `R E[A(A - 1)]`.
fn split_rate(model: &ContinuousModel) -> Option<f64> {
    let r = model.rate.constant_value()?;
    let factorial_moment = model.law.moment(2) - model.law.moment(1);
    (r * factorial_moment > 0.0).then_some(r * factorial_moment)
}

/// Survival of the split time beyond the simulated horizon is `e^{-40}`.
const SPLIT_HORIZON_RATES: f64 = 40.0;

/// Statistical tests per `(t, k)` cell: direct, spine, and the two unit means.
const TESTS_PER_CELL: usize = 4;

/// The continuous-time suite: direct against spine against closed forms,
/// unit means of the weight martingales, Gibbs normalization and the
/// split-time law. The family-wise level `suite.level` is split evenly over
/// the statistical tests, so a correct model fails the suite with
/// probability at most that level. Each check draws from its own seed,
/// `seed + index`.
pub fn verify_ct(ctx: &Context) -> anyhow::Result<Outcome> {
    if ctx.cfg.config.model.time != TimeMode::Continuous {
        return Err(ctx.cfg.error("model.time", "verify-ct needs a continuous-time model").into());
    }
    let model = ctx.cfg.continuous_model()?;
    let suite = &ctx.cfg.config.suite;
    let run = &ctx.cfg.config.run;
    let base = ctx.seed()?;
    let split = split_rate(&model);
    let tests = TESTS_PER_CELL * suite.times.len() * suite.ks.len() + usize::from(split.is_some());
    let alpha = suite.level / tests.max(1) as f64;
    let z = two_sided_z(alpha);

    let mut out = Outcome::new(
        "verify-ct",
        vec!["check", "k", "t", "estimate", "std_error", "target", "passed", "detail"],
    );
    let mut rows: Vec<CheckRow> = Vec::new();
    let mut index = 0u64;
    let mut next_seed = || {
        index += 1;
        base.wrapping_add(index - 1)
    };

    let outcome = (|| -> anyhow::Result<()> {
        for &t in &suite.times {
            for &k in &suite.ks {
                let spec = ModelSpec::Continuous { model: model.clone(), horizon: t };
                let stat = Statistic::one(k);
                let exact = exact_value(&spec, &stat)?;
                let direct = estimate_direct(&spec, &stat, &ctx.run_config(next_seed()))?;
                let spine = estimate_spine(&spec, &stat, &ctx.run_config(next_seed()))?;
                let (d, s) = (interval(&direct, z), interval(&spine, z));
                let overlap = d[0] <= s[1] && s[0] <= d[1];
                for (name, r) in [("direct", &direct), ("spine", &spine)] {
                    let ok = overlap && exact.is_none_or(|x| covers(r, x, z));
                    rows.push(interval_row(name, k, t, r, exact, ok, z));
                }

                let zt = zeta_tilde_mean(&model, k, t, suite.unit_mean_replicates, next_seed(), &ctx.exec)?;
                rows.push(interval_row("zeta-tilde-mean", k, t, &zt, Some(1.0), covers(&zt, 1.0, z), z));
                let zm = z_mean(&model, k, t, suite.unit_mean_replicates, next_seed(), &ctx.exec, run.tuple_cap)?;
                rows.push(interval_row("z-mean", k, t, &zm, Some(1.0), covers(&zm, 1.0, z), z));

                let g = gibbs_check(&model, k, t, suite.gibbs_trees, next_seed(), run.tuple_cap)?;
                rows.push(CheckRow {
                    check: "gibbs",
                    k: Some(k),
                    t: Some(t),
                    estimate: g.max_normalization_error.max(g.max_projection_error),
                    std_error: None,
                    target: Some(0.0),
                    passed: g.passed(),
                    detail: format!(
                        "{} trees; normalization error {}; projection error {}; tolerance {}",
                        g.trees,
                        num(g.max_normalization_error),
                        num(g.max_projection_error),
                        num(g.tolerance)
                    ),
                });
            }
        }
        if let Some(rate) = split {
            let xs = split_times(
                &model,
                SPLIT_HORIZON_RATES / rate,
                suite.split_samples,
                next_seed(),
                &ctx.exec,
                &ctx.run_config(0).sim,
            )?;
            let ks = ks_exponential(&xs, rate);
            rows.push(CheckRow {
                check: "split-time-ks",
                k: Some(2),
                t: None,
                estimate: ks.statistic,
                std_error: None,
                target: None,
                passed: ks.passes(alpha),
                detail: format!(
                    "Exp({}); p-value {}; level {}; {} samples",
                    num(rate),
                    num(ks.p_value),
                    num(alpha),
                    ks.samples
                ),
            });
        }
        Ok(())
    })();

    if let Err(e) = outcome {
        out.error = Some(e.to_string());
    }
    out.passed = rows.iter().all(|r| r.passed);
    out.csv_rows = rows.iter().map(CheckRow::csv).collect();
    out.result = json!({
        "config": ctx.canonical_config(),
        "unsound": ctx.unsound,
        "tests": tests,
        "per_test_level": alpha,
        "z": z,
        "checks": rows,
    });
    Ok(out)
}

/// Bounds and Monte Carlo estimates of `P(A(x, t) >= 1)` for binary
/// branching Brownian motion. Passes when every estimate sits between its
/// bounds with three standard errors of slack.
pub fn bounds(ctx: &Context, xs: &[f64], ts: &[f64]) -> anyhow::Result<Outcome> {
    let rows = bounds_table(xs, ts, ctx.cfg.config.run.replicates, ctx.seed()?, &ctx.exec)?;
    let mut out = Outcome::new(
        "bounds",
        vec!["x", "t", "lower", "estimate", "std_error", "upper", "sandwiched"],
    );
    for r in &rows {
        out.csv_rows.push(vec![
            num(r.x),
            num(r.t),
            num(r.lower),
            num(r.estimate),
            num(r.std_error),
            num(r.upper),
            r.sandwiched(BOUNDS_SLACK).to_string(),
        ]);
    }
    out.passed = rows.iter().all(|r| r.sandwiched(BOUNDS_SLACK));
    out.result = json!({
        "replicates": ctx.cfg.config.run.replicates,
        "xs": xs,
        "ts": ts,
        "slack_std_errors": BOUNDS_SLACK,
        "rows": rows,
    });
    Ok(out)
}

pub const BOUNDS_SLACK: f64 = 3.0;

/// Unit mean of the configured motion's `zeta` at the query horizon,
/// started from the model origin.
pub fn martingale(ctx: &Context) -> anyhow::Result<Outcome> {
    let motion = ctx.cfg.motion()?;
    let c = &ctx.cfg.config;
    let r = martingale_check(&motion, c.model.origin, c.query.horizon, c.run.replicates, ctx.seed()?, &ctx.exec)?;
    let mut out = Outcome::new("martingale-check", REPORT_COLUMNS.to_vec());
    out.passed = r.covers_target == Some(true);
    out.csv_rows.push(report_row(&r, Some(1.0)));
    out.result = json!({ "config": ctx.canonical_config(), "report": r });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use spinekit::estimators::Factor;

    #[test]
    fn two_sided_quantiles() {
        assert!((two_sided_z(0.01) - 2.575_829_303_548_9).abs() < 1e-9);
        assert!((two_sided_z(0.05) - 1.959_963_984_540_05).abs() < 1e-9);
    }

    #[test]
    fn split_rate_of_binary_branching_is_two() {
        let m = ContinuousModel::binary_bbm(MotionModel::Brownian);
        assert_eq!(split_rate(&m), Some(2.0));
        let m = ContinuousModel {
            law: OffspringLaw::point_mass(1),
            ..m
        };
        assert_eq!(split_rate(&m), None);
    }

    #[test]
    fn exact_values_route_by_model() {
        let spec = ModelSpec::Continuous {
            model: ContinuousModel::binary_bbm(MotionModel::Brownian),
            horizon: 1.0,
        };
        let e = std::f64::consts::E;
        let v = exact_value(&spec, &Statistic::one(2)).unwrap().unwrap();
        assert!((v - (2.0 * e * e - e)).abs() < 1e-8 * v);
        let distinct = Statistic::Factored {
            factors: vec![Factor::One; 2],
            distinct: true,
        };
        assert_eq!(exact_value(&spec, &distinct).unwrap(), None);
    }
}
