//! Dose-response primitives and the Poisson-mixed survival term.

use super::params::VirusEnv;
use super::RiskError;

// Rescale the running sum before it can overflow.
const RESCALE_ABOVE: f64 = 1e250;

fn check(name: &str, v: f64) -> Result<(), RiskError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(RiskError::InvalidParam(format!("{name} must be a non-negative number, got {v}")))
    }
}

/// Infection probability of one susceptible sharing air with `infectors`
/// carriers for `hours`: `1 − exp(−I p q t / Q)`.
pub fn wells_riley(infectors: f64, env: &VirusEnv, hours: f64) -> Result<f64, RiskError> {
    check("infectors", infectors)?;
    check("exposure time", hours)?;
    env.validate()?;
    let dose = infectors * env.breathing_rate * env.quanta_rate * hours / env.ventilation;
    Ok(-(-dose).exp_m1())
}

/// As [`wells_riley`] with the susceptible inhaling through `F_m` and the
/// infectors exhaling through `R_m`.
pub fn wells_riley_masked(infectors: f64, env: &VirusEnv, hours: f64) -> Result<f64, RiskError> {
    let filtered = VirusEnv {
        breathing_rate: env.inhale_penetration * env.breathing_rate,
        quanta_rate: env.exhale_penetration * env.quanta_rate,
        ..*env
    };
    wells_riley(infectors, &filtered, hours)
}

/// Truncation bound of the carrier-count sum for a (real-valued) load.
pub fn truncation_bound(load: f64) -> u64 {
    load.ceil() as u64
}

/// `ln Σ_{n=0}^{K} xⁿ/n!`, rescaled so large `x` cannot overflow.
fn log_partial_exp(x: f64, bound: f64) -> f64 {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut log_scale = 0.0f64;
    let mut n = 0.0f64;
    while n < bound {
        n += 1.0;
        term *= x / n;
        sum += term;
        // past 2x each further term is at most half the previous one
        if n >= 2.0 * x && term <= sum * f64::EPSILON * 0.25 {
            break;
        }
        if sum > RESCALE_ABOVE {
            log_scale += sum.ln();
            term /= sum;
            sum = 1.0;
        }
    }
    log_scale + sum.ln()
}

/// `ln E[e^{−n·exponent}]` for `n ~ Pois(λ)` conditioned on `n ≤ K`, with
/// `λ = load·rate` and `K = ⌈load⌉`: a car holding `load` riders cannot
/// hold more carriers than riders. No validation; callers check inputs once
/// up front.
pub(crate) fn log_survival(load: f64, rate: f64, exponent: f64) -> f64 {
    let lambda = load * rate;
    if lambda == 0.0 || exponent == 0.0 {
        return 0.0;
    }
    let bound = load.ceil();
    let x = lambda * (-exponent).exp();
    // e^{−λ} cancels against the normalising Poisson cdf
    (log_partial_exp(x, bound) - log_partial_exp(lambda, bound)).min(0.0)
}

/// Probability of escaping infection from one OD group of carriers, with
/// the carrier count Poisson-approximated and limited to `⌈load⌉`.
/// `exponent` is the per-carrier dose exponent.
pub fn survival_term(load: f64, rate: f64, exponent: f64) -> Result<f64, RiskError> {
    check("load", load)?;
    check("exponent", exponent)?;
    if !(0.0..=1.0).contains(&rate) {
        return Err(RiskError::InvalidParam(format!("rate must lie in [0, 1], got {rate}")));
    }
    Ok(log_survival(load, rate, exponent).exp())
}

/// Poisson mass beyond the truncation bound, `P(n > ⌈load⌉)` for `n ~ Pois(load·rate)`.
/// Survival terms are within this distance of the untruncated closed form.
pub fn truncation_tail(load: f64, rate: f64) -> f64 {
    let lambda = load * rate;
    if lambda == 0.0 {
        return 0.0;
    }
    let bound = load.ceil();
    if lambda >= bound + 1.0 {
        // the tail is not small here, so the complement loses nothing
        return -(log_partial_exp(lambda, bound) - lambda).exp_m1().max(0.0);
    }
    // log pmf at K + 1, then sum the decreasing terms
    let first = bound + 1.0;
    let mut log_pmf = -lambda;
    let mut n = 1.0;
    while n <= first {
        log_pmf += lambda.ln() - n.ln();
        n += 1.0;
    }
    let mut term = log_pmf.exp();
    let mut tail = 0.0;
    let mut k = first;
    while term > tail * 1e-17 && term > 0.0 {
        tail += term;
        k += 1.0;
        term *= lambda / k;
    }
    tail
}

/// Expected new infections among `demand` riders of one OD group.
pub fn expected_infections(
    demand: f64,
    mask_fraction: f64,
    p_masked: f64,
    p_unmasked: f64,
) -> Result<f64, RiskError> {
    check("demand", demand)?;
    for (name, v) in [
        ("mask_fraction", mask_fraction),
        ("P_m", p_masked),
        ("P_nm", p_unmasked),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(RiskError::InvalidParam(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(blend(demand, mask_fraction, p_masked, p_unmasked))
}

#[inline]
pub(crate) fn blend(demand: f64, mask_fraction: f64, p_masked: f64, p_unmasked: f64) -> f64 {
    p_unmasked * (1.0 - mask_fraction) * demand + p_masked * mask_fraction * demand
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> VirusEnv {
        VirusEnv::default()
    }

    #[test]
    fn wells_riley_zero_cases() {
        assert_eq!(wells_riley(0.0, &env(), 0.5).unwrap(), 0.0);
        assert_eq!(wells_riley(1.0, &env(), 0.0).unwrap(), 0.0);
        assert!(wells_riley(-1.0, &env(), 0.5).is_err());
        assert!(wells_riley(1.0, &env(), -0.5).is_err());
    }

    #[test]
    fn wells_riley_half_hour() {
        // exponent 0.72 * 270 * 0.5 / 1958 = 0.0496424923391...
        let p = wells_riley(1.0, &env(), 0.5).unwrap();
        assert!((p - 0.048430443).abs() < 1e-9, "{p}");
    }

    #[test]
    fn masked_variants() {
        let e = VirusEnv { exhale_penetration: 1.0, inhale_penetration: 1.0, ..env() };
        assert_eq!(
            wells_riley_masked(2.0, &e, 0.3).unwrap(),
            wells_riley(2.0, &e, 0.3).unwrap()
        );
        let e = VirusEnv { exhale_penetration: 0.0, ..env() };
        assert_eq!(wells_riley_masked(2.0, &e, 0.3).unwrap(), 0.0);
        // both penetrations 0.5: a quarter of the unmasked exponent,
        // 1 - exp(-0.0124106230848) = 0.0123339289
        let p = wells_riley_masked(1.0, &env(), 0.5).unwrap();
        assert!((p - 0.012333929).abs() < 1e-9, "{p}");
    }

    #[test]
    fn survival_edge_cases() {
        assert_eq!(survival_term(20.0, 0.0, 0.05).unwrap(), 1.0);
        let s = survival_term(20.0, 0.01, 0.0).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(survival_term(-1.0, 0.01, 0.1).is_err());
        assert!(survival_term(1.0, 1.5, 0.1).is_err());
    }

    #[test]
    fn survival_matches_closed_form() {
        // exp(-0.2 * (1 - e^-0.05))
        let closed = (-0.2 * (1.0 - (-0.05f64).exp())).exp();
        let s = survival_term(20.0, 0.01, 0.05).unwrap();
        assert!((s - closed).abs() <= truncation_tail(20.0, 0.01) + 1e-15);
        assert!((s - 0.9902933).abs() < 5e-7);
    }

    #[test]
    fn heavy_loads_do_not_overflow() {
        assert_eq!(survival_term(5000.0, 1.0, 0.0).unwrap(), 1.0);
        let s = survival_term(5000.0, 1.0, 1e-3).unwrap();
        assert!(s.is_finite() && s > 0.0 && s < 1.0);
    }

    #[test]
    fn harmless_carriers_and_the_bound() {
        assert_eq!(survival_term(0.4, 0.5, 0.0).unwrap(), 1.0);
        // at most one carrier: E[e^{-na} | n <= 1] = (1 + λe^{-a}) / (1 + λ)
        let (lambda, a): (f64, f64) = (0.2, 0.3);
        let exact = (1.0 + lambda * (-a).exp()) / (1.0 + lambda);
        assert!((survival_term(0.4, 0.5, a).unwrap() - exact).abs() < 1e-15);
    }

    #[test]
    fn tail_of_a_single_carrier_bound() {
        // K = 1, tail = 1 - e^-λ (1 + λ)
        let lambda: f64 = 0.3;
        let exact = 1.0 - (-lambda).exp() * (1.0 + lambda);
        assert!((truncation_tail(1.0, lambda) - exact).abs() < 1e-15);
        assert_eq!(truncation_tail(3.0, 0.0), 0.0);
    }

    #[test]
    fn blending() {
        assert_eq!(expected_infections(100.0, 0.0, 0.3, 0.01).unwrap(), 1.0);
        assert_eq!(expected_infections(100.0, 1.0, 0.004, 0.3).unwrap(), 0.4);
        let r = expected_infections(100.0, 0.5, 0.004, 0.01).unwrap();
        assert!((r - 0.7).abs() < 1e-12);
        assert!(expected_infections(-1.0, 0.5, 0.004, 0.01).is_err());
    }
}
