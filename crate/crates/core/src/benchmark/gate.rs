use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{ratio_f64, ratio_string, BenchError, EvaluationReport, Gate, Recall};

/// The synthetic gate is decided on Recall@1.
pub const SYNTHETIC_PRIMARY_K: usize = 1;
/// Default K for the gold comparison.
pub const DEFAULT_GOLD_PRIMARY_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticOutcome {
    ProceedToGold,
    RevisitDesign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldOutcome {
    pub primary_k: usize,
    pub care_value: f64,
    pub baseline_value: f64,
    /// Exact values as `num/den`.
    pub care_exact: String,
    pub baseline_exact: String,
    pub care_better: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGateDecision {
    pub synthetic_outcome: SyntheticOutcome,
    pub synthetic_care_r1: f64,
    pub synthetic_baseline_r1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_outcome: Option<GoldOutcome>,
}

/// The decision on exact mean recalls. Gold values are consulted only when the
/// synthetic gate passes; a tie on Recall@1 passes.
pub fn decide(care_r1: Recall, base_r1: Recall, gold: Option<(Recall, Recall)>, gold_k: usize) -> TwoGateDecision {
    let synthetic_outcome = if care_r1 >= base_r1 {
        SyntheticOutcome::ProceedToGold
    } else {
        SyntheticOutcome::RevisitDesign
    };
    let gold_outcome = match (synthetic_outcome, gold) {
        (SyntheticOutcome::ProceedToGold, Some((c, b))) => Some(GoldOutcome {
            primary_k: gold_k,
            care_value: ratio_f64(&c),
            baseline_value: ratio_f64(&b),
            care_exact: ratio_string(&c),
            baseline_exact: ratio_string(&b),
            care_better: c > b,
        }),
        _ => None,
    };
    TwoGateDecision {
        synthetic_outcome,
        synthetic_care_r1: ratio_f64(&care_r1),
        synthetic_baseline_r1: ratio_f64(&base_r1),
        gold_outcome,
    }
}

fn comparable(care: &EvaluationReport, base: &EvaluationReport, gate: Gate) -> Result<(), BenchError> {
    for r in [care, base] {
        if r.gate != gate {
            return Err(BenchError::WrongGate {
                expected: gate,
                found: r.gate,
            });
        }
    }
    if care.benchmark_digest != base.benchmark_digest {
        return Err(BenchError::DifferentBenchmarks(care.benchmark_name.clone(), base.benchmark_name.clone()));
    }
    if care.config_hash != base.config_hash {
        return Err(BenchError::FairnessViolation(format!(
            "{} and {} ran with different model, catalog, tools or depth",
            care.agent_name, base.agent_name
        )));
    }
    Ok(())
}

/// Apply the two-gate protocol to evaluation reports. Gold reports are
/// optional, but must be given together.
pub fn two_gate(
    care_synth: &EvaluationReport,
    base_synth: &EvaluationReport,
    care_gold: Option<&EvaluationReport>,
    base_gold: Option<&EvaluationReport>,
    gold_k: usize,
) -> Result<TwoGateDecision, BenchError> {
    if gold_k == 0 {
        return Err(BenchError::InvalidK);
    }
    comparable(care_synth, base_synth, Gate::Synthetic)?;
    let c1 = care_synth.mean(SYNTHETIC_PRIMARY_K)?;
    let b1 = base_synth.mean(SYNTHETIC_PRIMARY_K)?;
    let gold = match (care_gold, base_gold) {
        (Some(c), Some(b)) => {
            comparable(c, b, Gate::Gold)?;
            Some((c.mean(gold_k)?, b.mean(gold_k)?))
        }
        (None, None) => None,
        _ => {
            return Err(BenchError::InvalidBenchmark(
                "gold reports must be given for both agents or neither".into(),
            ))
        }
    };
    Ok(decide(c1, b1, gold, gold_k))
}

/// Exact ratio from a decimal fraction given in thousandths.
pub fn from_permille(permille: u64) -> Recall {
    Ratio::new(permille, 1000)
}
