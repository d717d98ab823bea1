use anyhow::Result;
use clap::{Args, ValueEnum};
use kpzlab::mollifier::build_profile;
use kpzlab::theory::{cov_prediction, height_shift, make_scale_set, second_moment_oracle, sigma_gamma_sq, wick_moment};
use serde::Serialize;

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args)]
pub struct OracleArgs {
    #[arg(long)]
    beta: f64,
    /// Averaging exponents; repeatable.
    #[arg(long = "gamma", default_values_t = vec![0.0, 0.5, 1.0])]
    gammas: Vec<f64>,
    /// Separation exponents for the covariance; repeatable.
    #[arg(long = "zeta", default_values_t = vec![0.25, 0.5, 0.75])]
    zetas: Vec<f64>,
    /// Also solve for `E[u^2]` at this eps.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    t: f64,
    #[arg(long, default_value_t = 0.0)]
    separation: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Serialize)]
struct Row {
    quantity: &'static str,
    parameter: Option<f64>,
    value: f64,
    error: Option<f64>,
}

fn row(quantity: &'static str, parameter: Option<f64>, value: f64) -> Row {
    Row { quantity, parameter, value, error: None }
}

pub fn run(a: &OracleArgs) -> Result<()> {
    let mut rows = vec![row("height_shift", None, height_shift(a.beta)?)];
    for &g in &a.gammas {
        let s2 = sigma_gamma_sq(a.beta, g)?;
        rows.push(row("sigma_gamma_sq", Some(g), s2));
        for p in [3u32, 4] {
            rows.push(Row { quantity: if p == 3 { "wick_3" } else { "wick_4" }, ..row("", Some(g), wick_moment(p, s2)?) });
        }
    }
    for &z in &a.zetas {
        rows.push(row("cov", Some(z), cov_prediction(a.beta, z)?));
    }
    if let Some(eps) = a.eps {
        let profile = build_profile("standard-bump", 256)?;
        let scale = make_scale_set(a.beta, 0.0, eps, profile.l2_norm_sq)?;
        let m = second_moment_oracle(&scale, a.t, a.separation, &profile, a.tol)?;
        rows.push(Row { error: Some(m.error_estimate), ..row("second_moment", Some(a.separation), m.value) });
    }
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
        Format::Csv => {
            println!("quantity,parameter,value,error");
            for r in &rows {
                let p = r.parameter.map(|v| v.to_string()).unwrap_or_default();
                let e = r.error.map(|v| format!("{v:e}")).unwrap_or_default();
                println!("{},{p},{:.10},{e}", r.quantity, r.value);
            }
        }
    }
    Ok(())
}
