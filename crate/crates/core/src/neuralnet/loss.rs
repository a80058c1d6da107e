use super::ClassWeights;
use crate::flight::Label;

/// Probabilities are clamped here before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// `w_label · (−ln p_label)` for one sample.
pub fn weighted_ce_loss(probabilities: &[f64; 2], label: Label, weights: &ClassWeights) -> f64 {
    let p = probabilities[label.index()].max(LOG_CLAMP);
    -weights.for_label(label) * p.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_prediction_costs_nothing() {
        assert_eq!(weighted_ce_loss(&[0.0, 1.0], Label::Open, &ClassWeights::default()), 0.0);
        assert_eq!(weighted_ce_loss(&[1.0, 0.0], Label::Closed, &ClassWeights::default()), 0.0);
    }

    #[test]
    fn weighted_halves() {
        let w = ClassWeights::default();
        let open = weighted_ce_loss(&[0.5, 0.5], Label::Open, &w);
        assert!((open - 0.05 * 2f64.ln()).abs() < 1e-15);
        assert!((open - 0.0346574).abs() < 1e-7);
        let closed = weighted_ce_loss(&[0.5, 0.5], Label::Closed, &w);
        assert!((closed - 0.6238325).abs() < 1e-7);
        assert!((closed / open - 18.0).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let loss = weighted_ce_loss(&[1.0, 0.0], Label::Open, &ClassWeights::UNIFORM);
        assert!((loss - 12.0 * 10f64.ln()).abs() < 1e-9);
    }
}
