//! One runner per subcommand. Each returns its typed result, the checks it
//! evaluated and the requested exports.

use delayfbsde_core::bsde::SolverConfig;
use delayfbsde_core::control::{
    fundamental_relation_check, random_policies, FundamentalReport, TournamentPolicy,
};
use delayfbsde_core::malliavin::{bump_oracle, chain_rule, propagate_derivative};
use delayfbsde_core::noise::NoiseGrid;
use delayfbsde_core::pricing::{
    bs_closed_form, hedge_strategy, price, replication_test, Claim, MarketCoefficient,
    ReplicationConfig, ReplicationReport,
};
use delayfbsde_core::quadvar::{convergence_study, ConvergenceReport};
use delayfbsde_core::sdde::{simulate_forward, PathEnsemble, ScalarDelayModel};
use delayfbsde_core::stats::{quantile, std_dev, Estimate};
use serde::{Deserialize, Serialize};

use crate::export::{convergence_csv, ensemble_binary, ensemble_csv, malliavin_csv};
use crate::report::{Artifact, Check, Checks, Outcome, Report};
use crate::scenario::{
    ControlScenario, Export, MalliavinScenario, PriceScenario, QvScenario, Sampling,
    SimulateScenario,
};
use crate::{LabError, LabResult};

pub struct Run<R> {
    pub result: R,
    pub checks: Checks,
    pub artifacts: Vec<Artifact>,
}

impl<R: Serialize> Run<R> {
    pub fn into_outcome<C: Serialize>(self, command: &str, seed: u64, config: &C) -> Outcome {
        Outcome::from_report(
            &Report::new(command, seed, config, &self.result, self.checks),
            self.artifacts,
        )
    }
}

fn ensemble_exports(export: Export, ens: &PathEnsemble) -> Vec<Artifact> {
    let mut out = Vec::new();
    if export.csv {
        out.push(Artifact {
            name: "ensemble.csv".into(),
            bytes: ensemble_csv(ens),
        });
    }
    if export.binary {
        out.push(Artifact {
            name: "ensemble.bin".into(),
            bytes: ensemble_binary(ens),
        });
    }
    out
}

fn forward(s: &Sampling, model: &ScalarDelayModel) -> LabResult<(PathEnsemble, NoiseGrid)> {
    let x = s.segment()?;
    let noise = NoiseGrid::spanning(
        s.seed,
        s.paths,
        s.grid.dim_d(),
        s.grid.step(),
        s.start,
        s.horizon,
    )?;
    Ok((simulate_forward(model, s.start, &x, &noise)?, noise))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub paths: usize,
    pub steps: usize,
    pub dt: f64,
    /// Mean and standard deviation of `y_{t_k}` over paths, `k = 0..=M`.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub terminal: Estimate,
}

pub fn simulate(sc: &SimulateScenario) -> LabResult<Run<SimulateResult>> {
    let (ens, _) = forward(&sc.sampling, &sc.model)?;
    let column =
        |k: usize| -> Vec<f64> { (0..ens.num_paths()).map(|p| ens.state(p, k)[0]).collect() };
    let (mut mean, mut std) = (Vec::new(), Vec::new());
    for k in 0..=ens.steps() {
        let c = column(k);
        mean.push(c.iter().sum::<f64>() / c.len() as f64);
        std.push(std_dev(&c));
    }
    let result = SimulateResult {
        paths: ens.num_paths(),
        steps: ens.steps(),
        dt: ens.dt(),
        mean,
        std,
        terminal: Estimate::from_samples(&column(ens.steps())),
    };
    Ok(Run {
        result,
        checks: Checks::new(),
        artifacts: ensemble_exports(sc.export, &ens),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub price: f64,
    pub delta: f64,
    /// `π = Δ·S`, comparable to `hedge0`.
    pub hedge: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceResult {
    pub price: f64,
    pub se: f64,
    /// Discounted mean payoff on the same paths.
    pub discounted: Estimate,
    /// Amount held in the stock at the start.
    pub hedge0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<ClosedForm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replication_l2: Option<ReplicationReport>,
}

/// The lognormal price when drift and volatility are constant and the claim
/// is a plain call.
fn closed_form(sc: &PriceScenario) -> Option<ClosedForm> {
    let (
        MarketCoefficient::Constant { .. },
        MarketCoefficient::Constant { value: sigma },
        Claim::Call { strike },
    ) = (&sc.market.drift, &sc.market.vol, &sc.claim)
    else {
        return None;
    };
    let s = &sc.sampling;
    let spot = s.initial.value(0.0);
    let (price, delta) = bs_closed_form(spot, *strike, *sigma, sc.market.rate, s.horizon - s.start);
    Some(ClosedForm {
        price,
        delta,
        hedge: delta * spot,
    })
}

pub fn price_claim(sc: &PriceScenario) -> LabResult<Run<PriceResult>> {
    let s = &sc.sampling;
    let x = s.segment()?;
    let pricing = price(
        &sc.market,
        &sc.claim,
        s.start,
        &x,
        &SolverConfig::new(s.seed, s.paths, s.horizon),
    )?;
    let hedge0 = hedge_strategy(&pricing.solution, &sc.market, 0, x.as_ref())?;
    let mut checks = Checks::new();
    let gap = pricing.price.minus(pricing.discounted);
    checks.insert(
        "price_consistency".into(),
        Check::new(
            gap.mean.abs() <= 5.0 * gap.se,
            format!(
                "BSDE − discounted payoff = {:.6} ({:.2} SE)",
                gap.mean,
                gap.mean / gap.se.max(f64::MIN_POSITIVE)
            ),
        ),
    );
    let cf = closed_form(sc);
    if let Some(cf) = cf {
        let tol = 5.0 * pricing.price.se + sc.closed_form_slack * cf.price.abs();
        let diff = pricing.price.mean - cf.price;
        checks.insert(
            "closed_form".into(),
            Check::new(
                diff.abs() <= tol,
                format!("price − closed form = {diff:.6}, tolerance {tol:.6}"),
            ),
        );
    }
    let replication = match &sc.replication {
        Some(rep) => {
            let config = ReplicationConfig {
                seed: s.seed,
                horizon: s.horizon,
                delay: s.grid.delay(),
                steps: rep.steps.clone(),
                paths: rep.paths,
                pricing_paths: rep.pricing_paths,
            };
            let report = replication_test(
                &sc.market,
                &sc.claim,
                s.start,
                |t| s.initial.value(t),
                &config,
            )?;
            let reference = rep
                .reference_step
                .unwrap_or_else(|| rep.steps.iter().copied().fold(f64::INFINITY, f64::min));
            let level = report
                .levels
                .iter()
                .find(|l| (l.dt - reference).abs() <= 1e-12 * reference)
                .expect("reference step is on the ladder");
            checks.insert(
                "replication_bound".into(),
                Check::new(
                    level.relative_error <= rep.max_relative_error,
                    format!(
                        "L² error / price = {:.4} at Δt = {} (bound {})",
                        level.relative_error, level.dt, rep.max_relative_error
                    ),
                ),
            );
            let trend: Vec<String> = report
                .levels
                .iter()
                .map(|l| format!("{:.4}", l.l2_error.mean))
                .collect();
            checks.insert(
                "replication_decreasing".into(),
                Check::new(
                    report.decreasing,
                    format!("L² error over the ladder: {}", trend.join(" → ")),
                ),
            );
            Some(report)
        }
        None => None,
    };
    let artifacts = ensemble_exports(sc.export, pricing.solution.ensemble());
    let result = PriceResult {
        price: pricing.price.mean,
        se: pricing.price.se,
        discounted: pricing.discounted,
        hedge0,
        closed_form: cf,
        replication_l2: replication,
    };
    Ok(Run {
        result,
        checks,
        artifacts,
    })
}

pub fn control(sc: &ControlScenario) -> LabResult<Run<FundamentalReport>> {
    let s = &sc.sampling;
    if sc.export.binary {
        return Err(LabError::Config(
            "control writes no ensemble dump; set export.binary = false".into(),
        ));
    }
    let x = s.segment()?;
    let t = &sc.tournament;
    let policies: Vec<(String, TournamentPolicy)> = random_policies(
        &sc.problem.set,
        s.seed,
        t.constants,
        t.piecewise,
        t.pieces,
        s.start,
        s.horizon,
    )?
    .into_iter()
    .map(|p| (p.label(), p))
    .collect();
    let config = SolverConfig::new(s.seed, s.paths, s.horizon);
    let report = fundamental_relation_check(
        &sc.problem,
        &sc.model,
        &sc.rule,
        s.start,
        &x,
        &policies,
        &config,
    )?;
    let worst = report
        .policies
        .iter()
        .map(|p| p.gap.mean)
        .fold(f64::INFINITY, f64::min);
    let mut checks = Checks::new();
    checks.insert(
        "policies_above_value".into(),
        Check::new(
            report.policies.iter().all(|p| !p.violation),
            format!("min(J − v) = {worst:.5}, {:.2} SE", report.min_gap_in_se),
        ),
    );
    checks.insert(
        "feedback_attains_value".into(),
        Check::new(
            report.feedback_within,
            format!(
                "feedback J − v = {:.5}, tolerance {:.5}",
                report.feedback.gap.mean, report.feedback_tolerance
            ),
        ),
    );
    let artifacts = if sc.export.csv {
        vec![Artifact {
            name: "policies.csv".into(),
            bytes: report.csv().into_bytes(),
        }]
    } else {
        vec![]
    };
    Ok(Run {
        result: report,
        checks,
        artifacts,
    })
}

pub fn quadratic_variation(sc: &QvScenario) -> LabResult<Run<ConvergenceReport>> {
    let (ens, _) = forward(&sc.sampling, &sc.model)?;
    let report = convergence_study(&sc.model, &sc.functional, &ens, &sc.epsilons, sc.window, 0)?;
    let mut checks = Checks::new();
    let trend: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.5}", r.mean_abs_error))
        .collect();
    checks.insert(
        "decreasing".into(),
        Check::new(
            report.decreasing,
            format!("mean |C^ε − prediction|: {}", trend.join(" → ")),
        ),
    );
    let last = report.rows.last().expect("nonempty ladder");
    checks.insert(
        "final_within".into(),
        Check::new(
            report.final_within,
            format!(
                "mean error at ε = {} is {:.5} ± {:.5}",
                last.epsilon, last.mean_error, last.mean_error_se
            ),
        ),
    );
    let mut artifacts = Vec::new();
    if sc.export.csv {
        artifacts.push(Artifact {
            name: "qv.csv".into(),
            bytes: convergence_csv(&report),
        });
    }
    if sc.export.binary {
        artifacts.push(Artifact {
            name: "ensemble.bin".into(),
            bytes: ensemble_binary(&ens),
        });
    }
    Ok(Run {
        result: report,
        checks,
        artifacts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MalliavinResult {
    pub base_step: usize,
    pub paths: usize,
    /// Share of paths whose chain-rule value is within the relative
    /// tolerance of the bump oracle.
    pub agreeing_fraction: f64,
    pub median_relative_error: f64,
    pub q95_relative_error: f64,
    pub chain_rule_mean: Estimate,
    pub bump_mean: Estimate,
}

pub fn malliavin(sc: &MalliavinScenario) -> LabResult<Run<MalliavinResult>> {
    let s = &sc.sampling;
    let base = sc.base_step()?;
    let (ens, noise) = forward(s, &sc.model)?;
    let k = ens.steps();
    let state = propagate_derivative(&sc.model, &ens, base)?;
    let chain = chain_rule(&sc.functional, &state, &ens, k)?;
    let bump = bump_oracle(
        &sc.model,
        &noise,
        base,
        sc.bump,
        k,
        &s.segment()?,
        &sc.functional,
    )?;
    let mut rel: Vec<f64> = chain
        .iter()
        .zip(&bump)
        .map(|(a, b)| {
            let err = (a[0] - b[0]).abs();
            if err == 0.0 {
                0.0
            } else {
                err / b[0].abs()
            }
        })
        .collect();
    let agreeing = rel.iter().filter(|e| **e <= sc.relative_tolerance).count();
    rel.sort_by(f64::total_cmp);
    let column =
        |v: &[Vec<f64>]| Estimate::from_samples(&v.iter().map(|x| x[0]).collect::<Vec<_>>());
    let result = MalliavinResult {
        base_step: base,
        paths: ens.num_paths(),
        agreeing_fraction: agreeing as f64 / ens.num_paths() as f64,
        median_relative_error: quantile(&rel, 0.5),
        q95_relative_error: quantile(&rel, 0.95),
        chain_rule_mean: column(&chain),
        bump_mean: column(&bump),
    };
    let mut checks = Checks::new();
    checks.insert(
        "bump_agreement".into(),
        Check::new(
            result.agreeing_fraction >= sc.required_fraction,
            format!(
                "{:.1}% of paths within {}% of the bump oracle (need {:.0}%)",
                100.0 * result.agreeing_fraction,
                100.0 * sc.relative_tolerance,
                100.0 * sc.required_fraction
            ),
        ),
    );
    let mut artifacts = Vec::new();
    if sc.export.csv {
        artifacts.push(Artifact {
            name: "malliavin.csv".into(),
            bytes: malliavin_csv(&state, &ens, s.grid.dim_d()),
        });
    }
    if sc.export.binary {
        artifacts.push(Artifact {
            name: "ensemble.bin".into(),
            bytes: ensemble_binary(&ens),
        });
    }
    Ok(Run {
        result,
        checks,
        artifacts,
    })
}
