//! `ldpmin fit`: rate exponent from a result CSV.

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use ldp_min::analysis::fit_rate;
use ldp_min::report::fmt_real;

use crate::{usage, CliResult, Failure};

#[derive(Args)]
pub(crate) struct FitArgs {
    /// CSV with columns n and mean_abs_err; other columns are ignored.
    csv: PathBuf,
    /// Keep only rows with this mechanism label.
    #[arg(long)]
    mechanism: Option<String>,
    /// Keep only rows with this epsilon.
    #[arg(long)]
    epsilon: Option<f64>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

pub(crate) fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let path = a.csv.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.csv)
        .map_err(|e| Failure::Runtime(format!("{path}: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| Failure::Runtime(format!("{path}: {e}")))?
        .clone();
    let (Some(n_col), Some(err_col)) = (column(&headers, "n"), column(&headers, "mean_abs_err")) else {
        return usage(format!("{path}: need columns n and mean_abs_err"));
    };
    let mech_col = column(&headers, "mechanism");
    let eps_col = column(&headers, "epsilon");

    let mut points = Vec::new();
    let mut mechanisms = BTreeSet::new();
    let mut epsilons = BTreeSet::new();
    for (idx, rec) in reader.records().enumerate() {
        let row = idx + 1;
        let bad = |m: String| Failure::Runtime(format!("{path}: row {row}: {m}"));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |c: usize| rec.get(c).ok_or_else(|| bad(format!("missing column {}", c + 1)));
        if let (Some(c), Some(want)) = (mech_col, &a.mechanism) {
            if field(c)? != want {
                continue;
            }
        }
        if let Some(c) = eps_col {
            let raw = field(c)?;
            let eps: f64 = raw.parse().map_err(|_| bad(format!("bad epsilon {raw:?}")))?;
            if a.epsilon.is_some_and(|want| want != eps) {
                continue;
            }
            epsilons.insert(eps.to_bits());
        }
        if let Some(c) = mech_col {
            mechanisms.insert(field(c)?.to_string());
        }
        let raw_n = field(n_col)?;
        let n: f64 = raw_n.parse().map_err(|_| bad(format!("bad n {raw_n:?}")))?;
        let raw_err = field(err_col)?;
        let err: f64 = raw_err
            .parse()
            .map_err(|_| bad(format!("bad mean_abs_err {raw_err:?}")))?;
        if !(err > 0.0 && err.is_finite()) {
            return Err(bad(format!("mean_abs_err must be positive, got {raw_err}")));
        }
        if !(n > 1.0 && n.is_finite()) {
            return Err(bad(format!("n must exceed 1, got {raw_n}")));
        }
        points.push((n, err));
    }
    if mechanisms.len() > 1 {
        return usage(format!("{path} mixes mechanisms; pick one with --mechanism"));
    }
    if epsilons.len() > 1 {
        return usage(format!("{path} mixes epsilons; pick one with --epsilon"));
    }
    if points.len() < 3 {
        return Err(Failure::Runtime(format!(
            "{path}: need at least 3 rows, got {}",
            points.len()
        )));
    }
    let fit = fit_rate(&points)?;
    println!("A = {}", fmt_real(fit.a));
    println!("B = {}", fmt_real(fit.b));
    println!("C = {}", fmt_real(fit.c));
    match fit.alpha_hat() {
        Some(alpha) => println!("alpha_hat = {}", fmt_real(alpha)),
        None => println!("alpha_hat = undefined"),
    }
    println!("residual = {}", fmt_real(fit.residual));
    println!("points = {}", points.len());
    if fit.a <= 0.0 {
        return Err(Failure::Runtime(format!(
            "fitted A = {} is not positive: error does not decay with n",
            fmt_real(fit.a)
        )));
    }
    Ok(())
}
