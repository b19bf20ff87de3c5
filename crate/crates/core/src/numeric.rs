//! Small scalar helpers shared by the samplers.

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln N(x | 0, sd²)`.
pub fn ln_normal_pdf(x: f64, sd: f64) -> f64 {
    -LN_SQRT_2PI - sd.ln() - 0.5 * (x / sd).powi(2)
}

/// `ln N(x | mean, var)` parameterised by the variance.
pub fn ln_normal_pdf_var(x: f64, mean: f64, var: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * (x - mean).powi(2) / var
}

/// `ln(1 - e^{-q})` for `q > 0`, accurate at both ends.
pub fn ln_one_minus_exp_neg(q: f64) -> f64 {
    if q < std::f64::consts::LN_2 {
        (-(-q).exp_m1()).ln()
    } else {
        (-(-q).exp()).ln_1p()
    }
}

/// Mean and (population) variance of a slice.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_matches_definition() {
        for x in [-30.0f64, -4.0, 0.0, 2.5, 40.0] {
            let direct = x.exp() / (1.0 + x.exp());
            if x < 30.0 {
                assert!((logistic(x) - direct).abs() < 1e-15);
            }
            assert!((logit(logistic(x.clamp(-10.0, 10.0))) - x.clamp(-10.0, 10.0)).abs() < 1e-8);
        }
        assert!((logistic(-4.0) - 0.017_986_209_962_091_56).abs() < 1e-15);
    }

    #[test]
    fn log1mexp_branches() {
        for q in [1e-12f64, 1e-3, 0.5, 0.7, 3.0, 50.0] {
            let direct = (1.0 - (-q).exp()).ln();
            let rel = ((ln_one_minus_exp_neg(q) - direct) / direct).abs();
            assert!(rel < 1e-6 || (ln_one_minus_exp_neg(q) - direct).abs() < 1e-15, "{q}");
        }
    }

    #[test]
    fn normal_density() {
        assert!((ln_normal_pdf(0.0, 1.0) + LN_SQRT_2PI).abs() < 1e-15);
        assert!((ln_normal_pdf(1.3, 2.0) - ln_normal_pdf_var(1.3, 0.0, 4.0)).abs() < 1e-15);
    }
}
