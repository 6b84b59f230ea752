use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dollars per 1000 input tokens for gpt-3.5-turbo-0613.
pub const DEFAULT_RATE_INPUT: f64 = 0.0015;
/// Dollars per 1000 output tokens for gpt-3.5-turbo-0613.
pub const DEFAULT_RATE_OUTPUT: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub queries: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub rate_input: f64,
    pub rate_output: f64,
}

impl Default for CostLedger {
    fn default() -> Self {
        Self {
            queries: 0,
            input_tokens: 0,
            output_tokens: 0,
            rate_input: DEFAULT_RATE_INPUT,
            rate_output: DEFAULT_RATE_OUTPUT,
        }
    }
}

impl CostLedger {
    pub fn record(&mut self, input_tokens: u64, output_tokens: u64) {
        self.queries += 1;
        self.input_tokens += input_tokens;
        self.output_tokens += output_tokens;
    }
}

impl Add for CostLedger {
    type Output = CostLedger;

    /// Token totals add; the rates of `self` are kept.
    fn add(self, rhs: CostLedger) -> CostLedger {
        CostLedger {
            queries: self.queries + rhs.queries,
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub input_cost: f64,
    pub output_cost: f64,
    pub total: f64,
}

impl CostBreakdown {
    /// Cent-rounded strings for presentation.
    pub fn display(&self) -> [String; 3] {
        [
            format_dollars(self.input_cost),
            format_dollars(self.output_cost),
            format_dollars(self.total),
        ]
    }
}

pub fn format_dollars(amount: f64) -> String {
    format!("${:.2}", (amount * 100.0).round() / 100.0)
}

pub fn cost(ledger: &CostLedger) -> Result<CostBreakdown> {
    for (name, rate) in [("input", ledger.rate_input), ("output", ledger.rate_output)] {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::Config(format!(
                "{name} rate {rate} must be a nonnegative number"
            )));
        }
    }
    let input_cost = ledger.input_tokens as f64 * ledger.rate_input / 1000.0;
    let output_cost = ledger.output_tokens as f64 * ledger.rate_output / 1000.0;
    Ok(CostBreakdown {
        input_cost,
        output_cost,
        total: input_cost + output_cost,
    })
}
