use std::path::Path;

use biasprice::block_tariff::{
    equal_base_rate_draws, flat_below_threshold_draws, lambda_sweep, BlockTariffs,
};
use biasprice::comparative_statics::{figure1_table, sweep_table};
use biasprice::config::{parse_config, parse_grid_spec, parse_scheme, GridSpec};
use biasprice::quadratic_optimum::{
    numeric_quadratic_search_with, optimal_profit_scheme, optimal_welfare_scheme, oracle_agreement,
    Objective, OracleSettings, QuadraticOptimum,
};
use biasprice::report::{fmt_sig, Table};
use biasprice::variational::VariationalProblem;
use biasprice::{
    comparative_statics, CutoffMode, DynamicsSettings, Error, MarketEnv, PerceptionKernel,
    PriceScheme,
};

use crate::{
    emit, read_file, BlockArgs, DynamicsArgs, ElCheckArgs, Failure, ObjectiveArg, OptimizeArgs,
    SweepArgs, WelfareArgs,
};

fn load_env(path: &Path, a1: Option<f64>) -> Result<MarketEnv, Failure> {
    let cfg = parse_config(&read_file(path)?)?;
    let env = cfg.market_env()?;
    match a1 {
        Some(a1) => Ok(env.with_kernel(PerceptionKernel::mix_dirac(a1)?)?),
        None => Ok(env),
    }
}

/// A `[scheme]` table, or a bare scheme body.
fn load_scheme(path: &Path) -> Result<(PriceScheme, String), Failure> {
    let text = read_file(path)?;
    if let Ok(cfg) = parse_config(&text) {
        if let Some(s) = cfg.scheme {
            let id = s.id.unwrap_or_else(|| "scheme".into());
            return Ok((s.scheme, id));
        }
    }
    Ok((parse_scheme(&text)?, "scheme".into()))
}

fn grid(
    flag: Option<&str>,
    from_config: Option<GridSpec>,
    default: &str,
) -> Result<Vec<f64>, Failure> {
    let spec = match (flag, from_config) {
        (Some(text), _) => parse_grid_spec(text)?,
        (None, Some(g)) => g,
        (None, None) => parse_grid_spec(default)?,
    };
    Ok(spec.values())
}

fn optimum_row(t: &mut Table, o: &QuadraticOptimum, source: &str) {
    t.push(vec![
        fmt_sig(o.a),
        fmt_sig(o.b),
        fmt_sig(o.q_star),
        fmt_sig(o.value),
        source.into(),
    ]);
}

pub(crate) fn optimize(args: OptimizeArgs) -> Result<(), Failure> {
    if !(args.tol > 0.0 && args.value_tol > 0.0) {
        return Err(Failure::usage("tolerances must be positive"));
    }
    let env = load_env(&args.env, args.a1)?;
    let objective = match args.objective {
        ObjectiveArg::Profit => Objective::Profit,
        ObjectiveArg::Welfare => Objective::Welfare,
    };
    let closed = match objective {
        Objective::Profit => optimal_profit_scheme(&env)?,
        Objective::Welfare => optimal_welfare_scheme(&env)?,
    };
    let mut table = Table::new(["A", "B", "q_star", "value", "source"]);
    optimum_row(&mut table, &closed, "closed_form");
    let mut verdict = Ok(());
    if args.oracle {
        let oracle = numeric_quadratic_search_with(&env, objective, &OracleSettings::default())?;
        optimum_row(&mut table, &oracle, "oracle");
        verdict = oracle_agreement(&closed, &oracle, args.tol, args.value_tol);
    }
    emit(&args.output, &table.to_csv())?;
    verdict.map_err(Failure::from)
}

pub(crate) fn welfare(args: WelfareArgs) -> Result<(), Failure> {
    let env = load_env(&args.env, args.a1)?;
    let (scheme, id) = load_scheme(args.scheme.as_deref().unwrap_or(&args.env))?;
    let profit = env.expected_profit(&scheme)?;
    let welfare = env.expected_welfare(&scheme)?;
    let q = match args.lambda {
        Some(l) => env.aggregate_consumption(&scheme, l)?,
        None => env.mean_consumption(&scheme, CutoffMode::Perceived)?,
    };
    let mut t = Table::new(["scheme_id", "profit", "welfare", "surplus", "Q"]);
    t.push(vec![
        id,
        fmt_sig(profit),
        fmt_sig(welfare),
        fmt_sig(welfare - profit),
        fmt_sig(q),
    ]);
    emit(&args.output, &t.to_csv())
}

pub(crate) fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let (template, grid_cfg) = match &args.env {
        Some(path) => {
            let cfg = parse_config(&read_file(path)?)?;
            (cfg.market_env()?, cfg.grid.unwrap_or_default())
        }
        None => (
            MarketEnv::quadratic(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, PerceptionKernel::Dirac0)?,
            Default::default(),
        ),
    };
    let a1 = grid(args.a1.as_deref(), grid_cfg.a1, "0:0.6:13")?;
    let p = grid(args.p.as_deref(), grid_cfg.p, "0:4:9")?;
    let table = if args.figure1 {
        figure1_table(&a1, &p)?
    } else {
        sweep_table(&comparative_statics::sweep(&template, &a1, &p, args.seed)?)
    };
    emit(&args.output, &table.to_csv())
}

pub(crate) fn el_check(args: ElCheckArgs) -> Result<(), Failure> {
    let env = load_env(&args.env, None)?.with_kernel(PerceptionKernel::beta_mix(args.beta)?)?;
    let (scheme, _) = load_scheme(&args.scheme)?;
    let problem = VariationalProblem::new(env, scheme)?;
    let mut t = Table::new(["q", "residual"]);
    for (q, r) in problem.residual_profile(args.points)? {
        t.push_numbers(&[q, r]);
    }
    let (gap, markup) = problem.transversality_check()?;
    let mut top = Table::new(["gap_top", "markup_at_top"]);
    top.push_numbers(&[gap, markup]);
    emit(&args.output, &format!("{}\n{}", t.to_csv(), top.to_csv()))
}

pub(crate) fn block_compare(args: BlockArgs) -> Result<(), Failure> {
    let env = load_env(&args.env, None)?;
    let tariffs = BlockTariffs {
        p1: args.p1,
        p2: args.p2,
        p3: args.p3,
        qbar: args.qbar,
    };
    if !(tariffs.p2 <= tariffs.p1 && tariffs.p1 < tariffs.p3) {
        return Err(Error::Regime(format!(
            "need p2 <= p1 < p3, got ({}, {}, {})",
            tariffs.p2, tariffs.p1, tariffs.p3
        ))
        .into());
    }
    let lambdas = parse_grid_spec(&args.lambda_grid)?.values();
    let report = lambda_sweep(&env, tariffs, &lambdas)?;
    let mut text = report.table().to_csv();
    if let Some(n) = args.battery {
        let mut t = Table::new(["draw", "regime", "lambda", "Q_flat", "Q_twotier", "dQ"]);
        let draws = flat_below_threshold_draws(args.seed, n)?
            .into_iter()
            .chain(equal_base_rate_draws(args.seed, n)?);
        for (i, d) in draws.enumerate() {
            let r = lambda_sweep(&d.env, d.tariffs, &[0.0, 0.5, 1.0])?;
            for row in &r.rows {
                t.push(vec![
                    i.to_string(),
                    r.regime.tag().into(),
                    fmt_sig(row.lambda),
                    fmt_sig(row.q_flat),
                    fmt_sig(row.q_two_tier),
                    fmt_sig(row.delta),
                ]);
            }
        }
        text.push('\n');
        text.push_str(&t.to_csv());
    }
    emit(&args.output, &text)
}

pub(crate) fn dynamics(args: DynamicsArgs) -> Result<(), Failure> {
    let env = load_env(&args.env, None)?;
    let (scheme, _) = load_scheme(args.scheme.as_deref().unwrap_or(&args.env))?;
    let settings = DynamicsSettings {
        q0: args.q0,
        gain: args.gain,
        step: args.step,
        max_steps: args.max_steps,
        ..Default::default()
    };
    let (trajectory, failure) = match biasprice::simulate_dynamics(
        env.prefs(),
        env.kernel(),
        &scheme,
        args.theta,
        settings,
    ) {
        Ok(t) => (t, None),
        Err(Error::ConvergenceFailure { steps, trajectory }) => {
            let msg = format!("adjustment dynamics did not converge within {steps} steps");
            (*trajectory, Some(Failure::usage(msg)))
        }
        Err(e) => return Err(e.into()),
    };
    let mut buf = Vec::new();
    trajectory.write_csv(&mut buf)?;
    emit(&args.output, &String::from_utf8_lossy(&buf))?;
    failure.map_or(Ok(()), Err)
}
