/// InfoNCE loss `-log(e^{pos/τ} / (e^{pos/τ} + Σ e^{neg/τ}))` in log space.
///
/// When the positive logit is the largest the loss is evaluated as
/// `ln_1p(Σ e^{(neg-pos)/τ})`, which keeps tiny losses from rounding to zero.
pub fn info_nce(pos_sim: f64, neg_sims: &[f64], temperature: f64) -> f64 {
    debug_assert!(temperature > 0.0);
    let pos = pos_sim / temperature;
    let max_neg = neg_sims
        .iter()
        .map(|s| s / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_neg <= pos {
        let tail: f64 = neg_sims.iter().map(|s| (s / temperature - pos).exp()).sum();
        tail.ln_1p()
    } else {
        let sum: f64 = (pos - max_neg).exp()
            + neg_sims
                .iter()
                .map(|s| (s / temperature - max_neg).exp())
                .sum::<f64>();
        (max_neg - pos) + sum.ln()
    }
}

/// Softmax over `[pos, negs...] / τ`.
pub(crate) fn softmax(pos_sim: f64, neg_sims: &[f64], temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = std::iter::once(pos_sim)
        .chain(neg_sims.iter().copied())
        .map(|s| s / temperature)
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_scores_give_log_of_candidate_count() {
        for tau in [0.01, 0.1, 1.0, 7.5] {
            assert!((info_nce(0.5, &[0.5, 0.5, 0.5], tau) - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_positive_is_nearly_free() {
        let loss = info_nce(1.0, &[0.0, 0.0, 0.0], 0.01);
        assert!(loss > 0.0 && loss < 1e-30, "{loss}");
    }

    #[test]
    fn single_negative_example() {
        // -ln(e^2 / (e^2 + e^4)) = ln(1 + e^2)
        let expected = (1.0 + 2f64.exp()).ln();
        assert!((info_nce(0.2, &[0.4], 0.1) - expected).abs() < 1e-12);
        assert!((expected - 2.12693).abs() < 1e-5);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(0.3, &[0.1, -0.2, 0.9], 0.05);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn loss_is_non_negative_and_monotone(
            pos in -1.0f64..1.0,
            negs in prop::collection::vec(-1.0f64..1.0, 1..8),
            tau in 0.2f64..2.0,
            delta in 1e-3f64..0.5,
        ) {
            let base = info_nce(pos, &negs, tau);
            prop_assert!(base >= 0.0);
            prop_assert!(info_nce(pos + delta, &negs, tau) < base);
            let mut raised = negs.clone();
            raised[0] += delta;
            prop_assert!(info_nce(pos, &raised, tau) > base);
        }
    }
}
