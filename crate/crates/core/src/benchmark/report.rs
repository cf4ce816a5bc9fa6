use serde::{Deserialize, Serialize};

use super::{BenchError, EvaluationReport, Recall};

pub const TABLE_CAPTION: &str = "Two-gate evaluation results for NASA Earth science data discovery (Recall@K)";

/// Percentage with one decimal, rounded half up from the exact value.
pub fn format_percent(r: &Recall) -> String {
    let num = *r.numer() as u128;
    let den = *r.denom() as u128;
    let tenths = (num * 2000 + den) / (2 * den);
    format!("{}.{}%", tenths / 10, tenths % 10)
}

/// One gate's block of the table: a label, its size and one row per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRow {
    pub label: String,
    pub n: usize,
    pub ks: Vec<usize>,
    /// Agent name and its mean recall at each of `ks`.
    pub agents: Vec<(String, Vec<Recall>)>,
}

impl GateRow {
    /// Rows for two reports over the same benchmark, CARE agent first.
    pub fn from_reports(care: &EvaluationReport, base: &EvaluationReport, label: &str) -> Result<Self, BenchError> {
        if care.benchmark_digest != base.benchmark_digest {
            return Err(BenchError::DifferentBenchmarks(care.benchmark_name.clone(), base.benchmark_name.clone()));
        }
        let ks = care.ks.clone();
        let mut agents = Vec::new();
        for r in [care, base] {
            let values = ks.iter().map(|&k| r.mean(k)).collect::<Result<Vec<_>, _>>()?;
            agents.push((r.agent_name.clone(), values));
        }
        Ok(Self {
            label: label.to_string(),
            n: care.n,
            ks,
            agents,
        })
    }

    fn render(&self, out: &mut String) {
        for (i, (agent, values)) in self.agents.iter().enumerate() {
            if i == 0 {
                out.push_str(&format!("{} (n={})", self.label, self.n));
            }
            out.push('\t');
            out.push_str(agent);
            for v in values {
                out.push('\t');
                out.push_str(&format_percent(v));
            }
            out.push('\n');
        }
    }
}

fn header(ks: &[usize]) -> String {
    let mut s = String::from("Gate\tAgent");
    for k in ks {
        s.push_str(&format!("\tRecall@{k}"));
    }
    s.push('\n');
    s
}

/// Tab-separated table for one gate: header and one row per agent.
pub fn render_report(care: &EvaluationReport, base: &EvaluationReport, gate_label: &str) -> Result<String, BenchError> {
    let row = GateRow::from_reports(care, base, gate_label)?;
    let mut out = header(&row.ks);
    row.render(&mut out);
    Ok(out)
}

/// Tab-separated table for a single run: header and the agent's row.
pub fn render_run_table(report: &EvaluationReport) -> Result<String, BenchError> {
    let values = report.ks.iter().map(|&k| report.mean(k)).collect::<Result<Vec<_>, _>>()?;
    let row = GateRow {
        label: report.gate.label().to_string(),
        n: report.n,
        ks: report.ks.clone(),
        agents: vec![(report.agent_name.clone(), values)],
    };
    let mut out = header(&row.ks);
    row.render(&mut out);
    Ok(out)
}

/// The full two-gate table followed by its caption. All gates must report
/// the same K values.
pub fn render_two_gate_table(rows: &[GateRow]) -> Result<String, BenchError> {
    let ks = rows.first().map(|r| r.ks.clone()).ok_or(BenchError::EmptyBenchmark)?;
    if let Some(r) = rows.iter().find(|r| r.ks != ks) {
        return Err(BenchError::InvalidBenchmark(format!("{} reports K={:?}, expected {ks:?}", r.label, r.ks)));
    }
    let mut out = header(&ks);
    for r in rows {
        r.render(&mut out);
    }
    out.push('\n');
    out.push_str(TABLE_CAPTION);
    out.push('\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use num_rational::Ratio;

    use super::*;

    #[test]
    fn percent_rounding() {
        assert_eq!(format_percent(&Ratio::new(445, 621)), "71.7%");
        assert_eq!(format_percent(&Ratio::new(1, 8)), "12.5%");
        assert_eq!(format_percent(&Ratio::new(1, 2000)), "0.1%");
        assert_eq!(format_percent(&Ratio::new(1, 2001)), "0.0%");
        assert_eq!(format_percent(&Ratio::from_integer(1)), "100.0%");
        assert_eq!(format_percent(&Ratio::from_integer(0)), "0.0%");
    }

    #[test]
    fn mismatched_ks_rejected() {
        let row = |ks: Vec<usize>| GateRow {
            label: "G".into(),
            n: 1,
            agents: vec![("a".into(), ks.iter().map(|_| Ratio::from_integer(0)).collect())],
            ks,
        };
        assert!(render_two_gate_table(&[row(vec![1, 3]), row(vec![1, 5])]).is_err());
        assert_eq!(
            render_two_gate_table(&[row(vec![1])]).unwrap(),
            format!("Gate\tAgent\tRecall@1\nG (n=1)\ta\t0.0%\n\n{TABLE_CAPTION}\n")
        );
    }
}
