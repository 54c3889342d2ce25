use crate::error::{Error, Result};
use crate::model::AttentionTrajectory;

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Invalid(format!("smoothing alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// One exponential-moving-average step on `w_A`; the first frame passes
/// through unchanged.
pub fn ema_step(prev: Option<f64>, w_a: f64, alpha: f64) -> f64 {
    match prev {
        None => w_a,
        Some(s) => alpha * w_a + (1.0 - alpha) * s,
    }
}

/// `s[0] = w[0]`, `s[t] = alpha * w[t] + (1 - alpha) * s[t-1]`, applied to
/// `w_A` with `w_B = 1 - w_A`.
pub fn smooth_trajectory(traj: &AttentionTrajectory, alpha: f64) -> Result<AttentionTrajectory> {
    check_alpha(alpha)?;
    let mut prev = None;
    let weights = traj
        .weights
        .iter()
        .map(|w| {
            let s = ema_step(prev, w[0], alpha);
            prev = Some(s);
            [s, 1.0 - s]
        })
        .collect();
    Ok(AttentionTrajectory { weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(w_a: &[f64]) -> AttentionTrajectory {
        AttentionTrajectory {
            weights: w_a.iter().map(|&a| [a, 1.0 - a]).collect(),
        }
    }

    #[test]
    fn fluctuating_example() {
        let s = smooth_trajectory(&traj(&[0.8, 0.2, 0.9, 0.1]), 0.5).unwrap();
        let got: Vec<f64> = s.w_a().collect();
        for (g, e) in got.iter().zip([0.8, 0.5, 0.7, 0.4]) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_limits() {
        let t = traj(&[0.3, 0.9, 0.1, 0.6]);
        assert_eq!(smooth_trajectory(&t, 1.0).unwrap().w_a().collect::<Vec<_>>(), vec![0.3, 0.9, 0.1, 0.6]);
        assert!(smooth_trajectory(&t, 0.0).unwrap().w_a().all(|v| v == 0.3));
        assert!(smooth_trajectory(&t, 1.5).is_err());
    }

    #[test]
    fn stays_on_simplex() {
        let t = traj(&[0.13, 0.77, 0.31, 0.02, 0.99]);
        for w in smooth_trajectory(&t, 0.37).unwrap().weights {
            assert_eq!(w[0] + w[1], 1.0);
        }
    }
}
