use serde_json::{json, Value};

use super::cv::Trial;
use super::strategy::{SearchOutcome, Strategy};
use crate::pipeline::config_value;

pub const REPORT_SCHEMA: &str = "map-report/1";

fn trial_value(t: &Trial, timing: bool) -> Value {
    let mut v = json!({
        "index": t.index,
        "score": t.score,
        "fold_scores": t.fold_scores,
        "seed": t.seed,
        "pipeline": config_value(&t.config, None),
    });
    if let Some(e) = &t.error {
        v["error"] = e.clone().into();
    }
    if timing {
        v["wall_time_s"] = t.wall_time.into();
    }
    v
}

/// Search report. Wall times are left out unless `timing` is set so that
/// reruns produce identical bytes.
pub fn search_report(outcome: &SearchOutcome, seed: u64, timing: bool) -> Value {
    let best = outcome.best_trial();
    json!({
        "schema": REPORT_SCHEMA,
        "seed": seed,
        "strategy": outcome.strategy.name(),
        "oracle": outcome.strategy == Strategy::Oracle,
        "evaluations": outcome.history.len(),
        "best": {
            "index": best.index,
            "score": best.score,
            "fold_scores": best.fold_scores,
            "pipeline": config_value(&best.config, Some(seed)),
        },
        "best_so_far": outcome.best_so_far(),
        "history": outcome.history.iter().map(|t| trial_value(t, timing)).collect::<Vec<_>>(),
        "warnings": outcome.warnings,
    })
}
