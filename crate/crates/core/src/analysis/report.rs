use std::fmt::Write as _;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::{embed_2d, rank_profile, DistanceMatrix, Embedding, RankProfile};
use crate::bench::{evaluate, Episode};
use crate::error::{Error, Result};
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::rng::{derive_path, stream};
use crate::Model;

pub const ANALYSIS_SCHEMA: &str = "map-analysis/1";

/// Accuracy of every pipeline on every task.
#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyGrid {
    pub pipelines: Vec<String>,
    pub tasks: Vec<String>,
    cells: Vec<Option<f64>>,
}

impl AccuracyGrid {
    pub fn new(pipelines: Vec<String>, tasks: Vec<String>) -> Self {
        let cells = vec![None; pipelines.len() * tasks.len()];
        Self { pipelines, tasks, cells }
    }

    /// `rows[p][t]` is the accuracy of pipeline `p` on task `t`.
    pub fn from_rows(pipelines: Vec<String>, tasks: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let mut g = Self::new(pipelines, tasks);
        if rows.len() != g.pipelines.len() {
            return Err(Error::shape("AccuracyGrid", g.pipelines.len(), rows.len()));
        }
        for (p, r) in rows.iter().enumerate() {
            if r.len() != g.tasks.len() {
                return Err(Error::shape("AccuracyGrid", g.tasks.len(), r.len()));
            }
            for (t, &v) in r.iter().enumerate() {
                g.set(p, t, v);
            }
        }
        Ok(g)
    }

    pub fn set(&mut self, pipeline: usize, task: usize, accuracy: f64) {
        self.cells[pipeline * self.tasks.len() + task] = Some(accuracy);
    }

    pub fn get(&self, pipeline: usize, task: usize) -> Option<f64> {
        self.cells[pipeline * self.tasks.len() + task]
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Accuracies of all pipelines on `task`; errors on the first gap.
    pub fn column(&self, task: usize) -> Result<Vec<f64>> {
        (0..self.pipelines.len())
            .map(|p| {
                self.get(p, task).ok_or_else(|| Error::MissingCell {
                    pipeline: self.pipelines[p].clone(),
                    task: self.tasks[task].clone(),
                })
            })
            .collect()
    }
}

/// A labelled evaluation episode for the grid.
#[derive(Clone, Debug)]
pub struct GridTask {
    pub id: String,
    pub episode: Episode,
}

/// Runs every pipeline on every task. All pipelines on task `t` share the
/// pipeline seed derived from `(seed, t)`; a failing run scores 0.
pub fn evaluate_grid(base: &Model<f32>, pipelines: &[(String, PipelineConfig)], tasks: &[GridTask], seed: u64) -> AccuracyGrid {
    let mut grid = AccuracyGrid::new(pipelines.iter().map(|p| p.0.clone()).collect(), tasks.iter().map(|t| t.id.clone()).collect());
    let cells: Vec<(usize, usize)> = (0..pipelines.len()).flat_map(|p| (0..tasks.len()).map(move |t| (p, t))).collect();
    let acc: Vec<f64> = cells
        .par_iter()
        .map(|&(p, t)| {
            let ep = &tasks[t].episode;
            run_pipeline(base, &ep.task, &pipelines[p].1, derive_path(seed, &[stream::PIPELINE, t as u64]))
                .and_then(|m| evaluate(&m, &ep.test_x, &ep.test_y))
                .unwrap_or(0.0)
        })
        .collect();
    for (&(p, t), a) in cells.iter().zip(acc) {
        grid.set(p, t, a);
    }
    grid
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityReport {
    pub grid: AccuracyGrid,
    pub profiles: Vec<RankProfile>,
    pub distances: DistanceMatrix,
    pub embedding: Embedding,
    /// Index of the best pipeline per task, lowest index on ties.
    pub best: Vec<usize>,
}

pub fn similarity_report(grid: AccuracyGrid) -> Result<SimilarityReport> {
    let columns: Vec<Vec<f64>> = (0..grid.tasks.len()).map(|t| grid.column(t)).collect::<Result<_>>()?;
    let profiles: Vec<RankProfile> = columns.iter().zip(&grid.tasks).map(|(c, id)| rank_profile(id.clone(), c)).collect::<Result<_>>()?;
    let distances = DistanceMatrix::from_profiles(&profiles)?;
    let embedding = embed_2d(&distances);
    let best = columns
        .iter()
        .map(|c| {
            let top = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            c.iter().position(|&a| a == top).unwrap_or(0)
        })
        .collect();
    Ok(SimilarityReport {
        grid,
        profiles,
        distances,
        embedding,
        best,
    })
}

impl SimilarityReport {
    /// Rows = pipelines, columns = tasks.
    pub fn table_csv(&self) -> String {
        let g = &self.grid;
        let mut out = String::from("pipeline");
        for t in &g.tasks {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
        for (p, name) in g.pipelines.iter().enumerate() {
            out.push_str(name);
            for t in 0..g.tasks.len() {
                let _ = write!(out, ",{}", g.get(p, t).unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        out
    }

    pub fn distance_csv(&self) -> String {
        let mut out = String::from("task");
        for t in &self.grid.tasks {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
        for (t, row) in self.grid.tasks.iter().zip(self.distances.rows()) {
            out.push_str(t);
            for d in row {
                let _ = write!(out, ",{d}");
            }
            out.push('\n');
        }
        out
    }

    pub fn coordinates_csv(&self) -> String {
        let mut out = String::from("task,x,y\n");
        for (t, p) in self.grid.tasks.iter().zip(&self.embedding.points) {
            let _ = writeln!(out, "{t},{},{}", p[0], p[1]);
        }
        out
    }

    pub fn to_json(&self, seed: u64) -> Value {
        let g = &self.grid;
        json!({
            "schema": ANALYSIS_SCHEMA,
            "seed": seed,
            "pipelines": g.pipelines,
            "tasks": g.tasks,
            "cells": g.cell_count(),
            "distance": self.distances.rows(),
            "ranks": self.profiles.iter().map(|p| &p.ranks).collect::<Vec<_>>(),
            "coordinates": self.embedding.points,
            "stress": self.embedding.stress,
            "warnings": self.embedding.warning.iter().collect::<Vec<_>>(),
            "best": self.best.iter().zip(&g.tasks).map(|(&p, t)| json!({"task": t, "pipeline": g.pipelines[p]})).collect::<Vec<_>>(),
            "table_csv": self.table_csv(),
            "distance_csv": self.distance_csv(),
            "coordinates_csv": self.coordinates_csv(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn identical_columns_coincide() {
        let rows = vec![vec![0.9, 0.9, 0.1], vec![0.5, 0.5, 0.7], vec![0.7, 0.7, 0.3]];
        let r = similarity_report(AccuracyGrid::from_rows(names("p", 3), names("t", 3), &rows).unwrap()).unwrap();
        assert_eq!(r.distances.get(0, 1), 0.0);
        let (a, b) = (r.embedding.points[0], r.embedding.points[1]);
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        assert_eq!(r.best, vec![0, 0, 1]);
        let doc = r.to_json(4);
        assert_eq!(doc["schema"], ANALYSIS_SCHEMA);
        assert_eq!(doc["cells"], 9);
    }

    #[test]
    fn missing_cell_is_named() {
        let mut g = AccuracyGrid::new(names("p", 2), names("t", 2));
        g.set(0, 0, 0.5);
        g.set(1, 0, 0.6);
        g.set(0, 1, 0.5);
        match similarity_report(g) {
            Err(Error::MissingCell { pipeline, task }) => assert_eq!((pipeline.as_str(), task.as_str()), ("p1", "t1")),
            other => panic!("{other:?}"),
        }
    }
}
