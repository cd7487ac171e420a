//! Leaderboard math: mean win rates, geometric-mean stage scores,
//! threshold elimination and the weighted final score.
//!
//! A submission's win rate on one column is the fraction of other
//! submissions with a value there that it beats, ties counting one half.
//! Columns sharing a scenario id are averaged into the scenario's mean win
//! rate; a stage score is the geometric mean of those over the stage.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Floor applied to win rates before the geometric mean.
pub const DEFAULT_MWR_FLOOR: f64 = 0.01;
pub const OPEN_WEIGHT: f64 = 1.0 / 3.0;
pub const CLOSED_WEIGHT: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScorerError {
    #[error("stage score of an empty win-rate list")]
    Empty,
    #[error("negative win rate {0}")]
    Negative(f64),
    #[error("row {row}: {problem}")]
    Table { row: usize, problem: String },
    #[error("score matrix shape: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "higher" | "higher_better" | "up" | "+" => Ok(Direction::HigherBetter),
            "lower" | "lower_better" | "down" | "-" => Ok(Direction::LowerBetter),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Open,
    Closed,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Open => "open",
            Stage::Closed => "closed",
        })
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "open" => Ok(Stage::Open),
            "closed" => Ok(Stage::Closed),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioColumn {
    pub scenario_id: String,
    pub metric_id: String,
    pub direction: Direction,
}

/// Submissions × columns, cells possibly missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub submissions: Vec<String>,
    pub columns: Vec<ScenarioColumn>,
    /// `values[submission][column]`.
    pub values: Vec<Vec<Option<f64>>>,
}

impl ScoreMatrix {
    pub fn validate(&self) -> Result<(), ScorerError> {
        if self.values.len() != self.submissions.len() {
            return Err(ScorerError::Shape(format!(
                "{} rows for {} submissions",
                self.values.len(),
                self.submissions.len()
            )));
        }
        if let Some(row) = self.values.iter().find(|r| r.len() != self.columns.len()) {
            return Err(ScorerError::Shape(format!(
                "row of {} cells for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        Ok(())
    }
}

fn beats(a: f64, b: f64, direction: Direction) -> f64 {
    let (a, b) = match direction {
        Direction::HigherBetter => (a, b),
        Direction::LowerBetter => (b, a),
    };
    if a > b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

/// Win rate of every (submission, column). `None` where the submission has
/// no value or fewer than two submissions have one.
pub fn mean_win_rates(m: &ScoreMatrix) -> Result<Vec<Vec<Option<f64>>>, ScorerError> {
    m.validate()?;
    let n = m.submissions.len();
    let mut out = vec![vec![None; m.columns.len()]; n];
    for (c, column) in m.columns.iter().enumerate() {
        let present: Vec<(usize, f64)> = (0..n)
            .filter_map(|s| m.values[s][c].map(|v| (s, v)))
            .collect();
        if present.len() < 2 {
            continue;
        }
        for &(s, v) in &present {
            let wins: f64 = present
                .iter()
                .filter(|&&(t, _)| t != s)
                .map(|&(_, w)| beats(v, w, column.direction))
                .sum();
            out[s][c] = Some(wins / (present.len() - 1) as f64);
        }
    }
    Ok(out)
}

/// Averages column win rates by scenario id. Returns the scenario ids in
/// first-appearance order and `[submission][scenario]` rates.
pub fn scenario_win_rates(
    m: &ScoreMatrix,
) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>), ScorerError> {
    let per_column = mean_win_rates(m)?;
    let mut scenarios: Vec<String> = Vec::new();
    for col in &m.columns {
        if !scenarios.contains(&col.scenario_id) {
            scenarios.push(col.scenario_id.clone());
        }
    }
    let rates = per_column
        .iter()
        .map(|row| {
            scenarios
                .iter()
                .map(|sid| {
                    let vals: Vec<f64> = m
                        .columns
                        .iter()
                        .zip(row)
                        .filter(|(col, _)| col.scenario_id == *sid)
                        .filter_map(|(_, v)| *v)
                        .collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                })
                .collect()
        })
        .collect();
    Ok((scenarios, rates))
}

/// Geometric mean of win rates, each first raised to at least `floor`.
pub fn stage_score(mwrs: &[f64], floor: f64) -> Result<f64, ScorerError> {
    if mwrs.is_empty() {
        return Err(ScorerError::Empty);
    }
    if let Some(&neg) = mwrs.iter().find(|&&x| x < 0.0) {
        return Err(ScorerError::Negative(neg));
    }
    let log_sum: f64 = mwrs.iter().map(|&x| x.max(floor).ln()).sum();
    Ok((log_sum / mwrs.len() as f64).exp())
}

/// `(1/3)·open + (2/3)·closed`, full precision.
pub fn final_score(open: f64, closed: f64) -> f64 {
    OPEN_WEIGHT * open + CLOSED_WEIGHT * closed
}

/// Rounds half-up to two decimals for reporting.
pub fn round2(x: f64) -> f64 {
    // The small bias keeps values like 0.575 (stored as 0.57499…) rounding up.
    (x * 100.0 + 0.5 + 1e-9).floor() / 100.0
}

/// Submissions scoring at least `threshold`, best first. Ties keep input
/// order.
pub fn apply_threshold(scores: &[(String, f64)], threshold: f64) -> Vec<(String, f64)> {
    let mut kept: Vec<(String, f64)> = scores
        .iter()
        .filter(|(_, s)| *s >= threshold)
        .cloned()
        .collect();
    kept.sort_by(|a, b| b.1.total_cmp(&a.1));
    kept
}

/// The score of the `n`-th best submission: the highest threshold that
/// lets at least `n` through.
pub fn threshold_for_survivors(scores: &[(String, f64)], n: usize) -> Option<f64> {
    let mut sorted: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    n.checked_sub(1).and_then(|i| sorted.get(i).copied())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: Stage,
    pub scenarios: Vec<String>,
    /// `[submission][scenario]` mean win rates.
    pub mwr: Vec<Vec<Option<f64>>>,
    pub scores: Vec<Option<f64>>,
    /// Submission indices, best first; submissions without a score last.
    pub ranking: Vec<usize>,
}

fn rank(scores: &[Option<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match (scores[a], scores[b]) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.cmp(&b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    order
}

/// Stage scores from scenario win rates; missing rates are skipped.
pub fn stage_result(
    stage: Stage,
    scenarios: Vec<String>,
    mwr: Vec<Vec<Option<f64>>>,
    floor: f64,
) -> Result<StageResult, ScorerError> {
    let scores = mwr
        .iter()
        .map(|row| {
            let present: Vec<f64> = row.iter().flatten().copied().collect();
            if present.is_empty() {
                Ok(None)
            } else {
                stage_score(&present, floor).map(Some)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ranking = rank(&scores);
    Ok(StageResult {
        stage,
        scenarios,
        mwr,
        scores,
        ranking,
    })
}

/// One row of a leaderboard table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub stage: Stage,
    pub scenario: String,
    pub metric: String,
    pub direction: Direction,
    pub submission: String,
    /// `None` for a missing cell (`-` or empty in the file).
    pub value: Option<f64>,
}

/// Metric name marking rows that carry an already computed mean win rate.
pub const GIVEN_MWR_METRIC: &str = "MWR";

/// Reads `stage,scenario,metric,direction,submission,value` CSV rows.
pub fn read_leaderboard_csv(reader: impl Read) -> Result<Vec<LeaderboardRow>, ScorerError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let table = |problem: String| ScorerError::Table { row, problem };
        let rec = rec.map_err(|e| table(e.to_string()))?;
        if rec.len() != 6 {
            return Err(table(format!("expected 6 fields, got {}", rec.len())));
        }
        let value = match &rec[5] {
            "" | "-" => None,
            v => Some(v.parse::<f64>().map_err(|e| table(format!("value {v:?}: {e}")))?),
        };
        rows.push(LeaderboardRow {
            stage: rec[0].parse().map_err(table)?,
            scenario: rec[1].to_string(),
            metric: rec[2].to_string(),
            direction: rec[3].parse().map_err(table)?,
            submission: rec[4].to_string(),
            value,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardReport {
    pub submissions: Vec<String>,
    pub stages: Vec<StageResult>,
    /// Weighted final score where both stage scores exist.
    pub final_scores: Vec<Option<f64>>,
    /// `final_scores` rounded half-up to two decimals.
    pub final_scores_rounded: Vec<Option<f64>>,
    pub final_ranking: Vec<usize>,
}

/// Scores a leaderboard table. Per stage, scenarios that carry `MWR` rows
/// use those rates directly; every other scenario's rate is computed from
/// its metric rows.
pub fn score_leaderboard(rows: &[LeaderboardRow], floor: f64) -> Result<LeaderboardReport, ScorerError> {
    let mut submissions: Vec<String> = Vec::new();
    for r in rows {
        if !submissions.contains(&r.submission) {
            submissions.push(r.submission.clone());
        }
    }
    let sub_index: BTreeMap<&str, usize> = submissions
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    let mut stages = Vec::new();
    for stage in [Stage::Open, Stage::Closed] {
        let stage_rows: Vec<&LeaderboardRow> = rows.iter().filter(|r| r.stage == stage).collect();
        if stage_rows.is_empty() {
            continue;
        }
        let mut scenario_order: Vec<&str> = Vec::new();
        for r in &stage_rows {
            if !scenario_order.contains(&r.scenario.as_str()) {
                scenario_order.push(&r.scenario);
            }
        }
        let mut mwr = vec![vec![None; scenario_order.len()]; submissions.len()];
        for (k, scenario) in scenario_order.iter().enumerate() {
            let in_scenario: Vec<&&LeaderboardRow> =
                stage_rows.iter().filter(|r| r.scenario == *scenario).collect();
            let given: Vec<&&&LeaderboardRow> = in_scenario
                .iter()
                .filter(|r| r.metric == GIVEN_MWR_METRIC)
                .collect();
            if !given.is_empty() {
                for r in given {
                    mwr[sub_index[r.submission.as_str()]][k] = r.value;
                }
                continue;
            }
            let mut columns: Vec<ScenarioColumn> = Vec::new();
            for r in &in_scenario {
                if !columns.iter().any(|c| c.metric_id == r.metric) {
                    columns.push(ScenarioColumn {
                        scenario_id: r.scenario.clone(),
                        metric_id: r.metric.clone(),
                        direction: r.direction,
                    });
                }
            }
            let mut values = vec![vec![None; columns.len()]; submissions.len()];
            for r in &in_scenario {
                let c = columns.iter().position(|c| c.metric_id == r.metric).expect("column exists");
                values[sub_index[r.submission.as_str()]][c] = r.value;
            }
            let matrix = ScoreMatrix {
                submissions: submissions.clone(),
                columns,
                values,
            };
            let (_, rates) = scenario_win_rates(&matrix)?;
            for (s, row) in rates.into_iter().enumerate() {
                mwr[s][k] = row[0];
            }
        }
        stages.push(stage_result(
            stage,
            scenario_order.iter().map(|s| s.to_string()).collect(),
            mwr,
            floor,
        )?);
    }

    let stage_score = |stage: Stage, s: usize| {
        stages
            .iter()
            .find(|r| r.stage == stage)
            .and_then(|r| r.scores[s])
    };
    let final_scores: Vec<Option<f64>> = (0..submissions.len())
        .map(|s| match (stage_score(Stage::Open, s), stage_score(Stage::Closed, s)) {
            (Some(o), Some(c)) => Some(final_score(o, c)),
            _ => None,
        })
        .collect();
    let final_scores_rounded = final_scores.iter().map(|s| s.map(round2)).collect();
    let final_ranking = rank(&final_scores);
    Ok(LeaderboardReport {
        submissions,
        stages,
        final_scores,
        final_scores_rounded,
        final_ranking,
    })
}
