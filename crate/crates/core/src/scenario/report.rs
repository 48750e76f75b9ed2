//! Replications, parameter sweeps and the results table.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::{Scenario, ScenarioError};
use crate::engine::derive_seed;
use crate::sim::{run_chain, Finish, SimError, TraceLine};

pub const CSV_HEADER: [&str; 15] = [
    "run_id",
    "seed",
    "pess",
    "n_nodes",
    "tc_s",
    "p_err",
    "p0",
    "throughput_pps",
    "mean_fidelity",
    "delivered",
    "sim_time_s",
    "swaps",
    "purif_ok",
    "purif_fail",
    "cutoffs",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub run_id: usize,
    pub seed: u64,
    pub delivered: u64,
    pub sim_time_s: f64,
    pub throughput_pps: f64,
    pub mean_fidelity: Option<f64>,
    pub fidelities: Vec<f64>,
    pub swaps: u64,
    pub purif_ok: u64,
    pub purif_fail: u64,
    pub cutoffs: u64,
    pub message_hops: u64,
    pub finish: Finish,
}

#[derive(Debug, Error)]
#[error("run {run} (seed {seed}): {source}")]
pub struct ReplicationError {
    pub run: usize,
    pub seed: u64,
    pub source: SimError,
}

/// Seed of replication `run` under `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    derive_seed(master, &format!("run-{run}"))
}

/// Runs replication `run` of `s`, optionally keeping its event log.
pub fn run_one(s: &Scenario, run: usize, trace: bool) -> Result<(RunResult, Option<Vec<TraceLine>>), ReplicationError> {
    let seed = run_seed(s.seed, run);
    let out =
        run_chain(s.tunnel(), s.params(), seed, trace).map_err(|source| ReplicationError { run, seed, source })?;
    let st = out.stats;
    let result = RunResult {
        run_id: run,
        seed,
        delivered: st.delivered,
        sim_time_s: st.sim_time,
        throughput_pps: st.throughput(),
        mean_fidelity: st.mean_fidelity(),
        fidelities: st.fidelities.clone(),
        swaps: st.swaps,
        purif_ok: st.purif_ok,
        purif_fail: st.purif_fail,
        cutoffs: st.cutoffs,
        message_hops: st.message_hops,
        finish: st.finish.expect("finished run"),
    };
    Ok((result, out.trace))
}

/// Runs all replications of `s` in parallel; results come back in run order.
pub fn run_replications(s: &Scenario) -> Result<Vec<RunResult>, ReplicationError> {
    (0..s.runs).into_par_iter().map(|i| run_one(s, i, false).map(|(r, _)| r)).collect()
}

/// Mean and sample standard deviation of each metric over a set of runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub runs: usize,
    pub throughput_pps: [f64; 2],
    /// Over runs that delivered at least one pair.
    pub mean_fidelity: Option<[f64; 2]>,
    pub delivered: [f64; 2],
    pub sim_time_s: [f64; 2],
    pub swaps: [f64; 2],
    pub purif_ok: [f64; 2],
    pub purif_fail: [f64; 2],
    pub cutoffs: [f64; 2],
}

fn mean_std(xs: &[f64]) -> [f64; 2] {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    [mean, var.sqrt()]
}

pub fn aggregate(results: &[RunResult]) -> Aggregate {
    let col = |f: fn(&RunResult) -> f64| mean_std(&results.iter().map(f).collect::<Vec<_>>());
    let fids: Vec<f64> = results.iter().filter_map(|r| r.mean_fidelity).collect();
    Aggregate {
        runs: results.len(),
        throughput_pps: col(|r| r.throughput_pps),
        mean_fidelity: (!fids.is_empty()).then(|| mean_std(&fids)),
        delivered: col(|r| r.delivered as f64),
        sim_time_s: col(|r| r.sim_time_s),
        swaps: col(|r| r.swaps as f64),
        purif_ok: col(|r| r.purif_ok as f64),
        purif_fail: col(|r| r.purif_fail as f64),
        cutoffs: col(|r| r.cutoffs as f64),
    }
}

/// One line of the results table, already formatted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CsvRow {
    pub run_id: String,
    pub seed: String,
    pub pess: String,
    pub n_nodes: String,
    pub tc_s: String,
    pub p_err: String,
    pub p0: String,
    pub throughput_pps: String,
    pub mean_fidelity: String,
    pub delivered: String,
    pub sim_time_s: String,
    pub swaps: String,
    pub purif_ok: String,
    pub purif_fail: String,
    pub cutoffs: String,
}

fn fmt_tc(tc: Option<f64>) -> String {
    tc.map_or_else(|| "inf".to_string(), |t| t.to_string())
}

/// Per-run rows followed by the `mean` and `std` rows for one cell.
pub fn rows_for(s: &Scenario, results: &[RunResult]) -> Vec<CsvRow> {
    let base = |run_id: String, seed: String| CsvRow {
        run_id,
        seed,
        pess: s.label(),
        n_nodes: s.n_nodes().to_string(),
        tc_s: fmt_tc(s.noise.tc_s),
        p_err: s.noise.p_err.to_string(),
        p0: s.noise.p0.to_string(),
        throughput_pps: String::new(),
        mean_fidelity: String::new(),
        delivered: String::new(),
        sim_time_s: String::new(),
        swaps: String::new(),
        purif_ok: String::new(),
        purif_fail: String::new(),
        cutoffs: String::new(),
    };
    let mut rows: Vec<CsvRow> = results
        .iter()
        .map(|r| CsvRow {
            throughput_pps: r.throughput_pps.to_string(),
            mean_fidelity: r.mean_fidelity.map(|f| f.to_string()).unwrap_or_default(),
            delivered: r.delivered.to_string(),
            sim_time_s: r.sim_time_s.to_string(),
            swaps: r.swaps.to_string(),
            purif_ok: r.purif_ok.to_string(),
            purif_fail: r.purif_fail.to_string(),
            cutoffs: r.cutoffs.to_string(),
            ..base(r.run_id.to_string(), r.seed.to_string())
        })
        .collect();
    if results.is_empty() {
        return rows;
    }
    let agg = aggregate(results);
    for (label, k) in [("mean", 0), ("std", 1)] {
        rows.push(CsvRow {
            throughput_pps: agg.throughput_pps[k].to_string(),
            mean_fidelity: agg.mean_fidelity.map(|f| f[k].to_string()).unwrap_or_default(),
            delivered: agg.delivered[k].to_string(),
            sim_time_s: agg.sim_time_s[k].to_string(),
            swaps: agg.swaps[k].to_string(),
            purif_ok: agg.purif_ok[k].to_string(),
            purif_fail: agg.purif_fail[k].to_string(),
            cutoffs: agg.cutoffs[k].to_string(),
            ..base(label.to_string(), String::new())
        });
    }
    rows
}

pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Memory coherence time in seconds; infinity means an ideal memory.
    Tc,
    /// Gate and measurement depolarization probability.
    PErr,
}

impl SweepParam {
    pub fn apply(self, s: &Scenario, value: f64) -> Result<Scenario, ScenarioError> {
        let mut s = s.clone();
        match self {
            SweepParam::Tc => s.noise.tc_s = value.is_finite().then_some(value),
            SweepParam::PErr => s.noise.p_err = value,
        }
        s.resolve()?;
        Ok(s)
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("a sweep needs at least one value")]
    NoValues,
    #[error("a sweep needs at least one strategy")]
    NoStrategies,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{pess} at {value}: {source}")]
    Run { pess: String, value: f64, source: Box<ReplicationError> },
}

/// Runs every `(strategy, value)` cell and returns the table sorted by
/// strategy, value and run.
pub fn sweep(cells: &[Scenario], param: SweepParam, values: &[f64]) -> Result<Vec<CsvRow>, SweepError> {
    if values.is_empty() {
        return Err(SweepError::NoValues);
    }
    if cells.is_empty() {
        return Err(SweepError::NoStrategies);
    }
    let mut grid = Vec::new();
    for s in cells {
        for &v in values {
            grid.push((param.apply(s, v)?, v));
        }
    }
    let jobs: Vec<(usize, usize)> =
        grid.iter().enumerate().flat_map(|(c, (s, _))| (0..s.runs).map(move |r| (c, r))).collect();
    let results: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (s, v) = &grid[c];
            run_one(s, r, false).map(|(res, _)| res).map_err(|source| SweepError::Run {
                pess: s.label(),
                value: *v,
                source: Box::new(source),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut keyed: Vec<(String, f64, Vec<CsvRow>)> = Vec::new();
    let mut offset = 0;
    for (s, v) in &grid {
        let runs = &results[offset..offset + s.runs];
        offset += s.runs;
        keyed.push((s.label(), *v, rows_for(s, runs)));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(keyed.into_iter().flat_map(|(_, _, rows)| rows).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;

    fn quick(json: &str) -> Scenario {
        Scenario::from_json(json, "test").unwrap()
    }

    #[test]
    fn noiseless_single_run() {
        let s = quick(
            r#"{"strategy": "nested", "purification": [0, 0, 0, 0], "pairs": 10, "runs": 1,
                "noise": {"p0": 0, "p_err": 0, "tc_s": null}}"#,
        );
        let r = run_replications(&s).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].throughput_pps > 0.0);
        assert_eq!(r[0].delivered, 10);
        assert!((r[0].mean_fidelity.unwrap() - 1.0).abs() < 1e-12);
        assert!((r[0].throughput_pps - r[0].delivered as f64 / r[0].sim_time_s).abs() < 1e-9);
    }

    #[test]
    fn replications_are_reproducible() {
        let s = quick(r#"{"strategy": "parallel", "purification": [0, 0], "pairs": 5, "runs": 4}"#);
        let a = run_replications(&s).unwrap();
        let b = run_replications(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(aggregate(&a), aggregate(&b));
        let seeds: std::collections::BTreeSet<u64> = a.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 4);
    }

    #[test]
    fn aggregates_match_rows() {
        let s = quick(r#"{"strategy": "consecutive", "purification": [0,0,1,0,0,0,0,0], "pairs": 5, "runs": 5}"#);
        let results = run_replications(&s).unwrap();
        let rows = rows_for(&s, &results);
        assert_eq!(rows.len(), 7);
        let per_run: Vec<f64> = rows[..5].iter().map(|r| r.throughput_pps.parse().unwrap()).collect();
        let mean: f64 = rows[5].throughput_pps.parse().unwrap();
        assert!((per_run.iter().sum::<f64>() / 5.0 - mean).abs() < 1e-9);
        assert_eq!(rows[5].run_id, "mean");
        assert_eq!(rows[6].run_id, "std");
    }

    #[test]
    fn sweep_shape_and_order() {
        let base = quick(r#"{"strategy": "parallel", "purification": [0, 0], "pairs": 3, "runs": 2}"#);
        let cells = vec![
            base.with_preset(preset("Nested").unwrap()).unwrap(),
            base.with_preset(preset("Parallel").unwrap()).unwrap(),
        ];
        let rows = sweep(&cells, SweepParam::PErr, &[0.01, 0.0]).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 4);
        assert_eq!(rows[0].pess, "Nested");
        assert_eq!(rows[0].p_err, "0");
        assert_eq!(rows[4].p_err, "0.01");
        assert_eq!(rows[8].pess, "Parallel");

        let one = sweep(&cells[..1], SweepParam::Tc, &[f64::INFINITY]).unwrap();
        assert_eq!(one.iter().filter(|r| r.run_id == "mean").count(), 1);
        assert_eq!(one[0].tc_s, "inf");
        assert!(matches!(sweep(&cells, SweepParam::Tc, &[]), Err(SweepError::NoValues)));
    }

    #[test]
    fn csv_header_is_stable() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "run_id,seed,pess,n_nodes,tc_s,p_err,p0,throughput_pps,mean_fidelity,delivered,sim_time_s,swaps,purif_ok,purif_fail,cutoffs\n"
        );
    }
}
