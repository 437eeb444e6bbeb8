//! Three interactive operations for the static page in `www/`. Each takes and
//! returns JSON text so the page needs no bindings beyond strings.

use adapipe::analysis::{similarity_report, AccuracyGrid};
use adapipe::ops::{trans_pn, AdaptTask, Switch, TransPnHp};
use adapipe::rng::{derive, rng_from};
use adapipe::search::{tpe_suggest, DimKind, Dimension, Point, SearchSpace, TpeSettings};
use adapipe::{Matrix, Model, ModelTemplate};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn parse(text: &str) -> Result<Value, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

fn points(v: &Value, key: &str) -> Result<Vec<[f64; 2]>, String> {
    v[key]
        .as_array()
        .map(|a| a.iter().map(|p| [p[0].as_f64().unwrap_or(f64::NAN), p[1].as_f64().unwrap_or(f64::NAN)]).collect())
        .ok_or_else(|| format!("missing array {key:?}"))
}

fn matrix(pts: &[[f64; 2]]) -> Result<Matrix<f64>, String> {
    Matrix::new(pts.len(), 2, pts.iter().flatten().copied().collect()).map_err(|e| e.to_string())
}

/// Decision regions of a prototype head on the plane.
///
/// Input: `{"labeled": [[x, y], ...], "labels": [c, ...], "unlabeled": [[x, y], ...],
/// "p": 1, "tau": 10, "cipa": true, "rounds": 4, "weight": 1, "grid": 48}`.
/// The embedding is the identity, so regions are cones around the origin bent
/// by the power transform. Output: class per grid cell (row-major from the
/// top-left of `[-1, 1]²`) and the final prototypes.
pub fn prototype_regions_json(input: &str) -> Result<String, String> {
    let v = parse(input)?;
    let labeled = points(&v, "labeled")?;
    let labels: Vec<usize> = v["labels"]
        .as_array()
        .ok_or("missing labels")?
        .iter()
        .map(|l| l.as_u64().map(|l| l as usize).ok_or("labels must be class indices"))
        .collect::<Result<_, _>>()?;
    let unlabeled = points(&v, "unlabeled").unwrap_or_default();
    let n_way = labels.iter().max().map_or(0, |m| m + 1);
    if n_way < 2 {
        return Err("place points of at least two classes".into());
    }
    if labeled.len() != labels.len() {
        return Err("labeled points and labels differ in length".into());
    }
    // Tasks are balanced: every class keeps its first k points.
    let k_shot = (0..n_way).map(|c| labels.iter().filter(|&&l| l == c).count()).min().unwrap_or(0);
    if k_shot == 0 {
        return Err("every class needs at least one point".into());
    }
    let mut seen = vec![0; n_way];
    let (mut support, mut kept) = (Vec::new(), Vec::new());
    for (p, &l) in labeled.iter().zip(&labels) {
        if seen[l] < k_shot {
            seen[l] += 1;
            support.push(*p);
            kept.push(l);
        }
    }
    let task = AdaptTask::new(matrix(&support)?, kept, matrix(&unlabeled)?, n_way, k_shot).map_err(|e| e.to_string())?;
    let hp = TransPnHp {
        p: v["p"].as_f64().unwrap_or(1.0),
        tau: v["tau"].as_f64().unwrap_or(10.0),
        cipa_switch: Switch::from_bool(v["cipa"].as_bool().unwrap_or(false)),
        cipa_rounds: v["rounds"].as_u64().unwrap_or(4) as u32,
        cipa_unlabeled_weight: v["weight"].as_f64().unwrap_or(1.0),
    };
    hp.validate().map_err(|e| e.to_string())?;
    let base: Model<f64> = ModelTemplate {
        input_width: 2,
        hidden: Vec::new(),
        batch_norm: false,
        classes: n_way,
    }
    .build(0)
    .map_err(|e| e.to_string())?;
    let model = trans_pn(&base, &task, &hp).map_err(|e| e.to_string())?;
    let n = v["grid"].as_u64().unwrap_or(48).clamp(4, 200) as usize;
    let coord = |i: usize| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
    let cells: Vec<[f64; 2]> = (0..n).flat_map(|r| (0..n).map(move |c| [coord(c), -coord(r)])).collect();
    let classes = model.predict(&matrix(&cells)?).map_err(|e| e.to_string())?.argmax_rows();
    let prototypes = match &model.head {
        adapipe::model::Head::Prototype(p) => p.prototypes.iter_rows().map(<[f64]>::to_vec).collect::<Vec<_>>(),
        _ => Vec::new(),
    };
    Ok(json!({"grid": n, "classes": classes, "prototypes": prototypes}).to_string())
}

/// Rank-distance analysis of an accuracy table.
///
/// Input: CSV with a header `pipeline,task1,task2,...` and one row per
/// pipeline. Output: task names, distance matrix, planar coordinates, stress
/// and the best pipeline per task.
pub fn similarity_json(csv: &str) -> Result<String, String> {
    let mut lines = csv.lines().map(str::trim).filter(|l| !l.is_empty());
    let header: Vec<String> = lines.next().ok_or("empty table")?.split(',').skip(1).map(|s| s.trim().to_string()).collect();
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut f = line.split(',');
        names.push(f.next().unwrap_or_default().trim().to_string());
        let row: Vec<f64> = f
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("row {}: {x:?} is not a number", i + 2)))
            .collect::<Result<_, _>>()?;
        rows.push(row);
    }
    let grid = AccuracyGrid::from_rows(names.clone(), header.clone(), &rows).map_err(|e| e.to_string())?;
    let r = similarity_report(grid).map_err(|e| e.to_string())?;
    Ok(json!({
        "tasks": header,
        "distance": r.distances.rows(),
        "points": r.embedding.points,
        "stress": r.embedding.stress,
        "best": r.best.iter().map(|&p| &names[p]).collect::<Vec<_>>(),
    })
    .to_string())
}

/// Objectives offered on the page, all maximized over `[0, 1]`.
pub fn objective(name: &str, x: f64) -> Option<f64> {
    match name {
        "quadratic" => Some(1.0 - (x - 0.3).powi(2)),
        "bimodal" => Some(0.8 * (-((x - 0.2) / 0.05).powi(2)).exp() + (-((x - 0.75) / 0.1).powi(2)).exp()),
        "wiggly" => Some((12.0 * x).sin() * 0.3 + 1.0 - (x - 0.6).powi(2)),
        _ => None,
    }
}

/// Runs TPE on one of the [`objective`]s; returns every suggestion, its score
/// and the running best.
pub fn tpe_trace_json(name: &str, trials: usize, seed: u64) -> Result<String, String> {
    objective(name, 0.0).ok_or_else(|| format!("unknown objective {name:?}"))?;
    let space = SearchSpace::new(vec![Dimension {
        name: "x".into(),
        kind: DimKind::Uniform { low: 0.0, high: 1.0 },
    }])
    .map_err(|e| e.to_string())?;
    let settings = TpeSettings::default();
    let mut history: Vec<(Point, f64)> = Vec::new();
    for t in 0..trials.min(500) {
        let p = tpe_suggest(&history, &space, &settings, &mut rng_from(derive(seed, t as u64))).map_err(|e| e.to_string())?;
        let y = objective(name, p[0]).unwrap_or(0.0);
        history.push((p, y));
    }
    let mut best = f64::NEG_INFINITY;
    let curve: Vec<f64> = history
        .iter()
        .map(|h| {
            best = best.max(h.1);
            best
        })
        .collect();
    Ok(json!({
        "x": history.iter().map(|h| h.0[0]).collect::<Vec<_>>(),
        "y": history.iter().map(|h| h.1).collect::<Vec<_>>(),
        "best": curve,
        "startup": settings.n_startup,
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn prototype_regions(input: &str) -> Result<String, JsValue> {
    js(prototype_regions_json(input))
}

#[wasm_bindgen]
pub fn similarity(csv: &str) -> Result<String, JsValue> {
    js(similarity_json(csv))
}

#[wasm_bindgen]
pub fn tpe_trace(name: &str, trials: usize, seed: u64) -> Result<String, JsValue> {
    js(tpe_trace_json(name, trials, seed))
}
