use serde::{Deserialize, Serialize};

/// USD prices per one million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceSheet {
    pub input_price: f64,
    pub output_price: f64,
}

impl PriceSheet {
    pub fn new(input_price: f64, output_price: f64) -> Self {
        assert!(
            input_price >= 0.0 && output_price >= 0.0,
            "prices must be non-negative"
        );
        PriceSheet {
            input_price,
            output_price,
        }
    }
}

/// Cost in USD of a request with the given (possibly averaged) token counts.
pub fn estimate_cost(input_tokens: f64, output_tokens: f64, price: &PriceSheet) -> f64 {
    input_tokens * price.input_price / 1e6 + output_tokens * price.output_price / 1e6
}

/// Running token totals for a gateway.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub requests: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Set once any exchange fell back to the whitespace token proxy.
    pub approximate: bool,
}

impl UsageTotals {
    pub fn cost(&self, price: &PriceSheet) -> f64 {
        estimate_cost(self.input_tokens as f64, self.output_tokens as f64, price)
    }

    pub fn merge(&mut self, other: &UsageTotals) {
        self.requests += other.requests;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.approximate |= other.approximate;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_usage_is_free() {
        assert_eq!(estimate_cost(0.0, 0.0, &PriceSheet::new(3.0, 9.0)), 0.0);
    }

    #[test]
    fn rating_and_labeling_prices() {
        let rating = estimate_cost(1349.35, 80.0, &PriceSheet::new(0.50, 1.50));
        assert!((rating - 0.000795).abs() < 1e-6, "{rating}");
        let labeling = estimate_cost(1088.71, 80.0, &PriceSheet::new(30.0, 60.0));
        assert!((labeling - 0.0375).abs() < 1e-4, "{labeling}");
    }

    proptest! {
        #[test]
        fn linear_in_tokens(a in 0.0f64..1e6, b in 0.0f64..1e6, c in 0.0f64..1e6, d in 0.0f64..1e6,
                            pi in 0.0f64..100.0, po in 0.0f64..100.0) {
            let p = PriceSheet::new(pi, po);
            let joint = estimate_cost(a + b, c + d, &p);
            let split = estimate_cost(a, c, &p) + estimate_cost(b, d, &p);
            prop_assert!((joint - split).abs() <= 1e-9 * joint.abs().max(1.0));
        }
    }
}
