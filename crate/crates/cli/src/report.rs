//! Result rows and the fixed CSV contract.

use std::io::Write;
use std::path::Path;

use dpglm::privacy::NoiseEvent;

use crate::error::{CliError, Result};

pub const CSV_HEADER: &str =
    "experiment,seed,n,d,epsilon,delta,algorithm,knob,knob_value,excess_risk,stderr,wall_ms,noise_events";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub algorithm: String,
    pub knob: String,
    pub knob_value: f64,
    pub excess_risk: f64,
    pub stderr: f64,
    pub wall_ms: u64,
    pub noise_events: usize,
}

impl ResultRow {
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.seed,
            self.n,
            self.d,
            self.epsilon,
            self.delta,
            self.algorithm,
            self.knob,
            self.knob_value,
            self.excess_risk,
            self.stderr,
            self.wall_ms,
            self.noise_events
        )
    }
}

pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_line());
        out.push('\n');
    }
    out
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(render_csv(rows).as_bytes())?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(CliError::Parse(format!("bad CSV header: {other:?}")));
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 13 {
                return Err(CliError::Parse(format!(
                    "row {}: expected 13 fields, found {}",
                    i + 1,
                    f.len()
                )));
            }
            let bad = |what: &str| CliError::Parse(format!("row {}: bad {what}", i + 1));
            Ok(ResultRow {
                experiment: f[0].to_string(),
                seed: f[1].parse().map_err(|_| bad("seed"))?,
                n: f[2].parse().map_err(|_| bad("n"))?,
                d: f[3].parse().map_err(|_| bad("d"))?,
                epsilon: f[4].parse().map_err(|_| bad("epsilon"))?,
                delta: f[5].parse().map_err(|_| bad("delta"))?,
                algorithm: f[6].to_string(),
                knob: f[7].to_string(),
                knob_value: f[8].parse().map_err(|_| bad("knob_value"))?,
                excess_risk: f[9].parse().map_err(|_| bad("excess_risk"))?,
                stderr: f[10].parse().map_err(|_| bad("stderr"))?,
                wall_ms: f[11].parse().map_err(|_| bad("wall_ms"))?,
                noise_events: f[12].parse().map_err(|_| bad("noise_events"))?,
            })
        })
        .collect()
}

/// One line per injected noise event, keyed by the row it came from.
pub fn write_noise_log(events: &[(String, Vec<NoiseEvent>)], path: &Path) -> Result<()> {
    let mut out = String::from("row,iteration,mechanism,bound,std,dim\n");
    for (row, evs) in events {
        for ev in evs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row, ev.iteration, ev.mechanism, ev.bound, ev.std, ev.dim
            ));
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
