use std::fs::File;

use instruct_curation::scorer::{
    final_score, read_leaderboard_csv, round2, score_leaderboard, Stage, DEFAULT_MWR_FLOOR,
};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/leaderboard_top3.csv");

#[test]
fn published_stage_scores_give_published_finals() {
    let cases = [((0.52, 0.61), 0.58), ((0.63, 0.32), 0.42), ((0.21, 0.47), 0.38)];
    for ((open, closed), expected) in cases {
        assert_eq!(round2(final_score(open, closed)), expected, "({open}, {closed})");
    }
}

#[test]
fn table_reproduces_ranking_and_finals() {
    let rows = read_leaderboard_csv(File::open(FIXTURE).unwrap()).unwrap();
    let report = score_leaderboard(&rows, DEFAULT_MWR_FLOOR).unwrap();
    assert_eq!(report.submissions, ["rank-1", "rank-2", "rank-3"]);

    // Stage scores recomputed from two-decimal win rates can drift by one
    // unit in the last place.
    let published = [(Stage::Open, [0.52, 0.63, 0.21]), (Stage::Closed, [0.61, 0.32, 0.47])];
    for (stage, expected) in published {
        let result = report.stages.iter().find(|s| s.stage == stage).unwrap();
        for (got, want) in result.scores.iter().zip(expected) {
            let got = got.unwrap();
            assert!((got - want).abs() <= 0.01 + 1e-9, "{stage:?}: {got} vs {want}");
        }
    }
    let finals: Vec<f64> = report.final_scores_rounded.iter().map(|s| s.unwrap()).collect();
    assert_eq!(finals, [0.58, 0.42, 0.38]);
    assert_eq!(report.final_ranking, [0, 1, 2]);
}

#[test]
fn given_win_rates_take_precedence() {
    let rows = read_leaderboard_csv(File::open(FIXTURE).unwrap()).unwrap();
    let without_metrics: Vec<_> = rows.iter().filter(|r| r.metric == "MWR").cloned().collect();
    let a = score_leaderboard(&rows, DEFAULT_MWR_FLOOR).unwrap();
    let b = score_leaderboard(&without_metrics, DEFAULT_MWR_FLOOR).unwrap();
    assert_eq!(a.final_scores, b.final_scores);
}

#[test]
fn win_rates_computed_from_metric_rows() {
    let rows = read_leaderboard_csv(File::open(FIXTURE).unwrap()).unwrap();
    let metrics_only: Vec<_> = rows
        .into_iter()
        .filter(|r| r.metric != "MWR" && r.scenario == "MMLU")
        .collect();
    let report = score_leaderboard(&metrics_only, DEFAULT_MWR_FLOOR).unwrap();
    let mwr = &report.stages[0].mwr;
    // Accuracy 0.63/0.69/0.64, robustness 0.59/0.64/0.60, fairness
    // 0.60/0.65/0.60: one tie for rank-1 and rank-3 in fairness.
    let expected = [(0.0 + 0.0 + 0.25) / 3.0, 1.0, (0.5 + 0.5 + 0.25) / 3.0];
    for (row, want) in mwr.iter().zip(expected) {
        assert!((row[0].unwrap() - want).abs() < 1e-12, "{row:?} vs {want}");
    }
}
