use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::pipeline::{run_pipeline_cached, SaeCache};
use super::{ExperimentConfig, Method, PipelineSpec, Selector};
use crate::data::{stratified_split, Dataset, SplitIndices};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepeatResult {
    pub repeat: usize,
    /// Split seed of this repeat.
    pub seed: u64,
    /// Test accuracy as a fraction.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub spec: PipelineSpec,
    pub runs: Vec<RepeatResult>,
}

impl Cell {
    pub fn count(&self) -> usize {
        self.runs.len()
    }

    /// Mean test accuracy in percent.
    pub fn mean_pct(&self) -> f64 {
        if self.runs.is_empty() {
            return f64::NAN;
        }
        100.0 * self.runs.iter().map(|r| r.accuracy).sum::<f64>() / self.runs.len() as f64
    }

    /// Sample standard deviation of the accuracies in percent (0 for a single run).
    pub fn std_pct(&self) -> f64 {
        let n = self.runs.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_pct() / 100.0;
        let ss: f64 = self.runs.iter().map(|r| (r.accuracy - m).powi(2)).sum();
        100.0 * (ss / (n - 1) as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ResultsTable {
    pub cells: Vec<Cell>,
}

impl ResultsTable {
    pub fn get(&self, spec: PipelineSpec) -> Option<&Cell> {
        self.cells.iter().find(|c| c.spec == spec)
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// The train/test split every pipeline sees in repeat `r`, drawn with seed `base_seed + r`.
pub fn repeat_split(ds: &Dataset<f64>, cfg: &ExperimentConfig, r: usize) -> Result<SplitIndices> {
    stratified_split(ds, cfg.test_frac, cfg.base_seed.wrapping_add(r as u64), cfg.stratify)
}

/// [`run_experiment_with_jobs`] on the calling thread.
pub fn run_experiment(ds: &Dataset<f64>, specs: &[PipelineSpec], cfg: &ExperimentConfig) -> Result<ResultsTable> {
    run_experiment_with_jobs(ds, specs, cfg, 1)
}

/// Runs every spec on `cfg.repeats` train/test splits. Repeat `r` uses split seed
/// `base_seed + r` for all specs; unlabeled rows of `ds` feed the semi-supervised
/// methods. Repeats run on `jobs` threads; the table does not depend on `jobs`.
pub fn run_experiment_with_jobs(ds: &Dataset<f64>, specs: &[PipelineSpec], cfg: &ExperimentConfig, jobs: usize) -> Result<ResultsTable> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(Error::invalid("no pipeline to run"));
    }
    for (i, s) in specs.iter().enumerate() {
        if specs[..i].contains(s) {
            return Err(Error::invalid(format!("pipeline {s} listed twice")));
        }
    }
    let unlabeled = ds.unlabeled_indices();
    let one_repeat = |r: usize| -> Result<Vec<RepeatResult>> {
        let seed = cfg.base_seed.wrapping_add(r as u64);
        let split = repeat_split(ds, cfg, r).map_err(|e| e.in_stage("split"))?;
        let mut cache = SaeCache::default();
        specs
            .iter()
            .map(|&spec| {
                run_pipeline_cached(ds, spec, &split, &unlabeled, cfg, seed, &mut cache)
                    .map(|run| RepeatResult {
                        repeat: r,
                        seed,
                        accuracy: run.accuracy,
                    })
                    .map_err(|e| e.in_stage(format!("repeat {r}, {spec}")))
            })
            .collect()
    };
    let per_repeat: Vec<Result<Vec<RepeatResult>>> = if jobs <= 1 {
        (0..cfg.repeats).map(one_repeat).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {jobs} worker threads: {e}")))?;
        pool.install(|| (0..cfg.repeats).into_par_iter().map(one_repeat).collect())
    };
    let mut cells: Vec<Cell> = specs
        .iter()
        .map(|&spec| Cell {
            spec,
            runs: Vec::with_capacity(cfg.repeats),
        })
        .collect();
    for rep in per_repeat {
        for (cell, res) in cells.iter_mut().zip(rep?) {
            cell.runs.push(res);
        }
    }
    Ok(ResultsTable { cells })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

const RESULTS_HEADER: &str = "method,selector,repeat,seed,accuracy";
const SUMMARY_MARK: &str = "# summary";
const SUMMARY_HEADER: &str = "method,selector,repeats,mean_pct,std_pct";

/// One line per (pipeline, repeat), then a summary block with mean and standard
/// deviation in percent.
pub fn results_to_csv(results: &ResultsTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{RESULTS_HEADER}");
    for cell in &results.cells {
        for r in &cell.runs {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                cell.spec.method().key(),
                cell.spec.selector().key(),
                r.repeat,
                r.seed,
                r.accuracy
            );
        }
    }
    let _ = writeln!(s, "{SUMMARY_MARK}");
    let _ = writeln!(s, "{SUMMARY_HEADER}");
    for cell in &results.cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            cell.spec.method().key(),
            cell.spec.selector().key(),
            cell.count(),
            cell.mean_pct(),
            cell.std_pct()
        );
    }
    s
}

fn parse_err(row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: String::new(),
        message: message.into(),
    }
}

/// Reads the per-repeat lines written by [`results_to_csv`]; the summary block is ignored.
pub fn parse_results_csv(text: &str) -> Result<ResultsTable> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RESULTS_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header {RESULTS_HEADER:?}"))),
    }
    let mut cells: Vec<Cell> = Vec::new();
    for (i, line) in lines {
        let row = i + 1;
        let line = line.trim();
        if line == SUMMARY_MARK {
            break;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(parse_err(row, format!("expected 5 fields, found {}", f.len())));
        }
        let spec = PipelineSpec::new(f[0].parse()?, f[1].parse()?).map_err(|e| parse_err(row, e.to_string()))?;
        let repeat = f[2].parse().map_err(|_| parse_err(row, "bad repeat index"))?;
        let seed = f[3].parse().map_err(|_| parse_err(row, "bad seed"))?;
        let accuracy: f64 = f[4].parse().map_err(|_| parse_err(row, "bad accuracy"))?;
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(parse_err(row, format!("accuracy {accuracy} outside [0, 1]")));
        }
        let res = RepeatResult { repeat, seed, accuracy };
        match cells.iter_mut().find(|c| c.spec == spec) {
            Some(c) => c.runs.push(res),
            None => cells.push(Cell { spec, runs: vec![res] }),
        }
    }
    Ok(ResultsTable { cells })
}

fn grid(results: &ResultsTable) -> BTreeMap<(Selector, Method), &Cell> {
    results
        .cells
        .iter()
        .map(|c| ((c.spec.selector(), c.spec.method()), c))
        .collect()
}

/// Selectors as rows, methods as columns, accuracy in percent with one decimal.
/// Combinations without results are left blank; selectors without any result are omitted.
pub fn render_table(results: &ResultsTable, format: TableFormat) -> String {
    let g = grid(results);
    let rows: Vec<Selector> = Selector::ALL
        .iter()
        .copied()
        .filter(|&s| Method::ALL.iter().any(|&m| g.contains_key(&(s, m))))
        .collect();
    match format {
        TableFormat::Csv => {
            let mut s = String::from("selector");
            for m in Method::ALL {
                s.push(',');
                s.push_str(m.label());
            }
            s.push('\n');
            for (suffix, value) in [("", Cell::mean_pct as fn(&Cell) -> f64), (" sd", Cell::std_pct)] {
                for &sel in &rows {
                    s.push_str(sel.label());
                    s.push_str(suffix);
                    for m in Method::ALL {
                        s.push(',');
                        if let Some(c) = g.get(&(sel, m)) {
                            let _ = write!(s, "{:.1}", value(c));
                        }
                    }
                    s.push('\n');
                }
            }
            s
        }
        TableFormat::Text => {
            let repeats = results.cells.iter().map(Cell::count).max().unwrap_or(0);
            let mut table: Vec<Vec<String>> = vec![std::iter::once("Selector".to_string())
                .chain(Method::ALL.iter().map(|m| m.label().to_string()))
                .collect()];
            for &sel in &rows {
                let mut line = vec![sel.label().to_string()];
                for m in Method::ALL {
                    line.push(
                        g.get(&(sel, m))
                            .map(|c| format!("{:.1} ({:.1})", c.mean_pct(), c.std_pct()))
                            .unwrap_or_default(),
                    );
                }
                table.push(line);
            }
            let widths: Vec<usize> = (0..table[0].len())
                .map(|j| table.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
                .collect();
            let mut s = format!("Test accuracy %, mean (sd across {repeats} repeats)\n");
            for line in &table {
                let cells: Vec<String> = line
                    .iter()
                    .zip(&widths)
                    .map(|(v, &w)| format!("{v:<w$}"))
                    .collect();
                s.push_str(cells.join("  ").trim_end());
                s.push('\n');
            }
            s
        }
    }
}

/// Reads a table rendered with [`TableFormat::Csv`] back into
/// `(selector, method) → (mean %, sd %)`.
pub fn parse_rendered_csv(text: &str) -> Result<BTreeMap<(Selector, Method), (f64, f64)>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| parse_err(1, "empty table"))?.split(',').collect();
    if header.first() != Some(&"selector") {
        return Err(parse_err(1, "expected a selector column first"));
    }
    let methods = header[1..]
        .iter()
        .map(|h| h.parse::<Method>())
        .collect::<Result<Vec<_>>>()?;
    let mut means = BTreeMap::new();
    let mut sds = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != methods.len() + 1 {
            return Err(parse_err(i + 2, "wrong number of fields"));
        }
        let (name, target) = match f[0].strip_suffix(" sd") {
            Some(n) => (n, &mut sds),
            None => (f[0], &mut means),
        };
        let sel: Selector = name.parse()?;
        for (m, v) in methods.iter().zip(&f[1..]) {
            if !v.is_empty() {
                let x: f64 = v.parse().map_err(|_| parse_err(i + 2, format!("bad number {v:?}")))?;
                target.insert((sel, *m), x);
            }
        }
    }
    means
        .into_iter()
        .map(|(k, mean)| {
            let sd = sds.get(&k).copied().ok_or_else(|| parse_err(0, "missing sd row"))?;
            Ok((k, (mean, sd)))
        })
        .collect()
}
