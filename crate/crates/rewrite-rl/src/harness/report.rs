//! Evaluation tables rendered as markdown and CSV.
//!
//! Every report type shares one cell formatter, so the two renderings always
//! agree on values: four decimal places for metrics, plain integers for
//! counts. Rendering an empty report is an error — a silent empty file would
//! look like a finished run.

use super::HarnessError;

/// Formats one metric cell; reports round to four decimals everywhere.
pub fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn markdown_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", headers.join(" | ")));
    out.push_str(&format!("|{}\n", " --- |".repeat(headers.len())));
    for row in rows {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}

fn csv_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&headers.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn require_rows<T>(rows: &[T], what: &str) -> Result<(), HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Validation(format!(
            "refusing to render an empty {what} report"
        )));
    }
    Ok(())
}

/// One evaluated rewriting system: answer-overlap metrics plus retrieval MRR,
/// all averaged over the held-out split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub system: String,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub bleu: f64,
    pub meteor: f64,
    pub mrr: f64,
}

/// The Table-2-style comparison of the four systems.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    const HEADERS: [&'static str; 7] = [
        "system", "rouge1", "rouge2", "rougeL", "bleu", "meteor", "mrr",
    ];

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.system.clone(),
                    fmt4(r.rouge1),
                    fmt4(r.rouge2),
                    fmt4(r.rouge_l),
                    fmt4(r.bleu),
                    fmt4(r.meteor),
                    fmt4(r.mrr),
                ]
            })
            .collect()
    }

    pub fn to_markdown(&self) -> Result<String, HarnessError> {
        require_rows(&self.rows, "evaluation")?;
        Ok(markdown_table(&Self::HEADERS, &self.cells()))
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        require_rows(&self.rows, "evaluation")?;
        Ok(csv_table(&Self::HEADERS, &self.cells()))
    }

    pub fn row(&self, system: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.system == system)
    }
}

/// Mean combined reward r_RL per system on the held-out split.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardRow {
    pub system: String,
    pub mean_r_rl: f64,
}

pub fn reward_markdown(rows: &[RewardRow]) -> Result<String, HarnessError> {
    require_rows(rows, "reward")?;
    Ok(markdown_table(
        &["system", "mean_r_RL"],
        &reward_cells(rows),
    ))
}

pub fn reward_csv(rows: &[RewardRow]) -> Result<String, HarnessError> {
    require_rows(rows, "reward")?;
    Ok(csv_table(&["system", "mean_r_RL"], &reward_cells(rows)))
}

fn reward_cells(rows: &[RewardRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| vec![r.system.clone(), fmt4(r.mean_r_rl)])
        .collect()
}

/// Held-out accuracy of one trained reward model.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub metric_tag: String,
    pub train_pairs: usize,
    pub eval_pairs: usize,
    pub accuracy: f64,
}

const ACCURACY_HEADERS: [&str; 4] = ["metric_tag", "train_pairs", "eval_pairs", "accuracy"];

fn accuracy_cells(rows: &[AccuracyRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.metric_tag.clone(),
                r.train_pairs.to_string(),
                r.eval_pairs.to_string(),
                fmt4(r.accuracy),
            ]
        })
        .collect()
}

pub fn accuracy_markdown(rows: &[AccuracyRow]) -> Result<String, HarnessError> {
    require_rows(rows, "reward-model accuracy")?;
    Ok(markdown_table(&ACCURACY_HEADERS, &accuracy_cells(rows)))
}

pub fn accuracy_csv(rows: &[AccuracyRow]) -> Result<String, HarnessError> {
    require_rows(rows, "reward-model accuracy")?;
    Ok(csv_table(&ACCURACY_HEADERS, &accuracy_cells(rows)))
}

/// ROUGE-1 and MRR of one PPO checkpoint on the held-out split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendRow {
    pub step: usize,
    pub rouge1: f64,
    pub mrr: f64,
}

pub fn trend_csv(rows: &[TrendRow]) -> Result<String, HarnessError> {
    require_rows(rows, "trend")?;
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.step.to_string(), fmt4(r.rouge1), fmt4(r.mrr)])
        .collect();
    Ok(csv_table(&["step", "rouge1", "mrr"], &cells))
}

/// Header of the PPO training log, in the order stats are written.
pub const PPO_LOG_HEADER: &str = "step,mean_r_RL,mean_kl,mean_m_q,mean_r_d_plus,mean_r_D,mean_r_G";

pub fn ppo_log_line(stats: &crate::ppo::PpoStepStats) -> String {
    format!(
        "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        stats.step,
        stats.mean_r_rl,
        stats.mean_kl,
        stats.mean_m_q,
        stats.mean_r_d_plus,
        stats.mean_r_rank_weighted,
        stats.mean_r_generation
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> EvalReport {
        EvalReport {
            rows: vec![
                EvalRow {
                    system: "manual".into(),
                    rouge1: 0.123456,
                    rouge2: 0.2,
                    rouge_l: 0.3,
                    bleu: 0.4,
                    meteor: 0.5,
                    mrr: 0.99995,
                },
                EvalRow {
                    system: "concat-history".into(),
                    rouge1: 0.0,
                    rouge2: 0.0,
                    rouge_l: 0.0,
                    bleu: 0.0,
                    meteor: 0.0,
                    mrr: 0.25,
                },
            ],
        }
    }

    #[test]
    fn stated_rounding_applies() {
        assert_eq!(fmt4(0.123456), "0.1235");
        assert_eq!(fmt4(0.0), "0.0000");
        assert_eq!(fmt4(1.0), "1.0000");
    }

    #[test]
    fn markdown_and_csv_agree_on_cells() {
        let report = sample_report();
        let md = report.to_markdown().unwrap();
        let csv = report.to_csv().unwrap();
        // every CSV data cell appears verbatim in the markdown
        for line in csv.lines().skip(1) {
            for cell in line.split(',') {
                assert!(md.contains(cell), "cell {cell} missing from markdown");
            }
        }
        assert!(md.starts_with("| system | rouge1 |"));
        assert!(csv.starts_with("system,rouge1,"));
        assert!(md.contains("| 0.1235 |"));
    }

    #[test]
    fn rendering_twice_is_byte_identical() {
        let report = sample_report();
        assert_eq!(report.to_markdown().unwrap(), report.to_markdown().unwrap());
        assert_eq!(report.to_csv().unwrap(), report.to_csv().unwrap());
    }

    #[test]
    fn empty_reports_refuse_to_render() {
        let empty = EvalReport::default();
        assert!(empty.to_markdown().is_err());
        assert!(empty.to_csv().is_err());
        assert!(trend_csv(&[]).is_err());
        assert!(accuracy_markdown(&[]).is_err());
        assert!(reward_csv(&[]).is_err());
    }

    #[test]
    fn trend_csv_has_one_row_per_checkpoint() {
        let rows = vec![
            TrendRow {
                step: 20,
                rouge1: 0.5,
                mrr: 0.6,
            },
            TrendRow {
                step: 40,
                rouge1: 0.55,
                mrr: 0.62,
            },
            TrendRow {
                step: 60,
                rouge1: 0.56,
                mrr: 0.63,
            },
            TrendRow {
                step: 80,
                rouge1: 0.58,
                mrr: 0.64,
            },
        ];
        let csv = trend_csv(&rows).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.lines().next(), Some("step,rouge1,mrr"));
        assert_eq!(csv.lines().nth(1), Some("20,0.5000,0.6000"));
    }

    #[test]
    fn ppo_log_line_matches_header_order() {
        let stats = crate::ppo::PpoStepStats {
            step: 3,
            mean_r_rl: 0.5,
            mean_kl: 0.01,
            mean_m_q: 0.7,
            mean_r_d_plus: 0.51,
            mean_r_rank_weighted: 0.52,
            mean_r_generation: 0.53,
        };
        let line = ppo_log_line(&stats);
        assert_eq!(line.split(',').count(), PPO_LOG_HEADER.split(',').count());
        assert!(line.starts_with("3,0.500000,0.010000,0.700000,"));
    }
}
