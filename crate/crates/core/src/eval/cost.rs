use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::comparator::ComparisonRecord;
use crate::selection::SelectionTrace;

/// Token-dominated per-call cost: `t_prefill_s + tokens_out * t_token_s`.
///
/// Defaults are calibration placeholders, not measurements of any backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub t_prefill_s: f64,
    pub t_token_s: f64,
    pub tokens_out: u32,
    /// Comparisons the backend can serve at once.
    pub parallel_width: u32,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            t_prefill_s: 0.02,
            t_token_s: 0.015,
            tokens_out: 1,
            parallel_width: 1,
        }
    }
}

impl CostModel {
    pub fn per_call_seconds(&self) -> f64 {
        self.t_prefill_s + self.tokens_out as f64 * self.t_token_s
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.t_prefill_s >= 0.0 && self.t_token_s >= 0.0) {
            return Err("cost model times must be non-negative".into());
        }
        if self.tokens_out == 0 || self.parallel_width == 0 {
            return Err("tokens_out and parallel_width must be at least 1".into());
        }
        Ok(())
    }
}

/// Critical-path latency of one query's selection under `model`.
///
/// Sequential strategies pay every call back to back. Strategies with
/// independent rounds pay `ceil(round_calls / parallel_width)` per round.
pub fn modeled_query_latency(trace: &SelectionTrace, model: &CostModel, bidirectional: bool) -> f64 {
    let per_pair = if bidirectional { 2 } else { 1 };
    let depth = if trace.is_parallelizable() {
        let width = model.parallel_width.max(1) as usize;
        trace
            .round_sizes
            .iter()
            .map(|&pairs| (pairs * per_pair).div_ceil(width))
            .sum::<usize>()
    } else {
        trace.comparisons_used * per_pair
    };
    depth as f64 * model.per_call_seconds()
}

/// Least-squares fit of per-call latency against output tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFit {
    pub t_prefill_s: f64,
    pub t_token_s: f64,
    pub samples: usize,
    pub rms_residual_s: f64,
}

impl CostFit {
    pub fn into_model(self, tokens_out: u32, parallel_width: u32) -> CostModel {
        CostModel {
            t_prefill_s: self.t_prefill_s,
            t_token_s: self.t_token_s,
            tokens_out,
            parallel_width,
        }
    }
}

/// Fits `latency = t_prefill + tokens * t_token` over `records`, keeping
/// both coefficients non-negative. With a single distinct token count the
/// slope is unidentifiable and all cost goes to prefill.
pub fn calibrate(records: &[ComparisonRecord]) -> Result<CostFit, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let xs: Vec<f64> = records.iter().map(|r| r.outcome.output_tokens as f64).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.outcome.latency_seconds).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();

    let (mut a, mut b) = if sxx > 0.0 {
        let b = sxy / sxx;
        (my - b * mx, b)
    } else {
        (my, 0.0)
    };
    if b < 0.0 {
        b = 0.0;
        a = my;
    }
    if a < 0.0 {
        // Refit through the origin.
        a = 0.0;
        let sxx0: f64 = xs.iter().map(|x| x * x).sum();
        b = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / sxx0;
    }
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    Ok(CostFit {
        t_prefill_s: a,
        t_token_s: b,
        samples: records.len(),
        rms_residual_s: (rss / n).sqrt(),
    })
}
