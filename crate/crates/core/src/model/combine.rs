use crate::corpus::{CombinedTable, Lang};
use crate::error::{Error, Result};
use crate::numerics::log_add_exp;

/// Scales each language's posteriors by its weight and concatenates them
/// into one distribution over the combined symbols. A non-blank symbol of
/// language X gets `w_X * p_X(k)`; the shared blank gets
/// `w_A * p_A(blank) + w_B * p_B(blank)`. Inputs and output are log-probs.
pub fn combine_posteriors(
    table: &CombinedTable,
    logp_a: &[f64],
    logp_b: &[f64],
    w_a: f64,
    w_b: f64,
) -> Result<Vec<f64>> {
    for w in [w_a, w_b] {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Invalid(format!("language weight {w} outside [0, 1]")));
        }
    }
    if (w_a + w_b - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("language weights {w_a} + {w_b} do not sum to 1")));
    }
    check_len(table, Lang::A, logp_a)?;
    check_len(table, Lang::B, logp_b)?;
    Ok(combine_log(table, logp_a, logp_b, w_a.ln(), w_b.ln()))
}

fn check_len(table: &CombinedTable, lang: Lang, logp: &[f64]) -> Result<()> {
    let n = table.table(lang).len();
    if logp.len() != n {
        return Err(Error::shape("combine_posteriors", &[n], &[logp.len()]));
    }
    Ok(())
}

/// [`combine_posteriors`] with log weights and no validation.
pub fn combine_log(table: &CombinedTable, logp_a: &[f64], logp_b: &[f64], lw_a: f64, lw_b: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(table.len());
    let (blank_a, blank_b) = (table.table(Lang::A).blank(), table.table(Lang::B).blank());
    for (k, &lp) in logp_a.iter().enumerate() {
        if k != blank_a {
            out.push(lw_a + lp);
        }
    }
    for (k, &lp) in logp_b.iter().enumerate() {
        if k != blank_b {
            out.push(lw_b + lp);
        }
    }
    out.push(log_add_exp(lw_a + logp_a[blank_a], lw_b + logp_b[blank_b]));
    out
}
