//! Run traces as JSON lines: one header, then step and mode-change records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::scenario::LoadedScenario;
use super::SimError;
use crate::ability::{MonitorStatus, SignalSample};
use crate::modes::{ModeChange, OperatingMode};

pub const TRACE_FORMAT: &str = "skillgraph-trace/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format: String,
    pub scenario: LoadedScenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub t: f64,
    pub step: usize,
    pub s: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
    /// Steering angle applied during this step, rad.
    pub delta: f64,
    /// Measured distance to the left marking; null when perception is invalid.
    pub distance: Option<f64>,
    pub true_distance: f64,
    pub valid: bool,
    pub samples: Vec<SignalSample>,
    pub levels: BTreeMap<String, f64>,
    pub status: BTreeMap<String, MonitorStatus>,
    pub overall: MonitorStatus,
    pub mode: OperatingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceRecord {
    Header(Box<TraceHeader>),
    ModeChange(ModeChange),
    Step(Box<StepRecord>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub header: TraceHeader,
    /// Step and mode-change records in emission order.
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Step(s) => Some(s.as_ref()),
            _ => None,
        })
    }

    pub fn steps_mut(&mut self) -> impl Iterator<Item = &mut StepRecord> {
        self.records.iter_mut().filter_map(|r| match r {
            TraceRecord::Step(s) => Some(s.as_mut()),
            _ => None,
        })
    }

    pub fn mode_changes(&self) -> impl Iterator<Item = &ModeChange> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::ModeChange(m) => Some(m),
            _ => None,
        })
    }

    pub fn main_id(&self) -> Option<&str> {
        self.header
            .scenario
            .graph
            .main_node()
            .map(|n| n.id.as_str())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = TraceRecord::Header(Box::new(self.header.clone()));
        for record in std::iter::once(&header).chain(&self.records) {
            out.push_str(&serde_json::to_string(record).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SimError> {
        let mut header = None;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord = serde_json::from_str(line).map_err(|e| SimError::Trace {
                line: line_no,
                message: format!("column {}: not a trace record ({e})", e.column()),
            })?;
            match record {
                TraceRecord::Header(h) if header.is_none() && records.is_empty() => {
                    if h.format != TRACE_FORMAT {
                        return Err(SimError::Trace {
                            line: line_no,
                            message: format!("unsupported trace format `{}`", h.format),
                        });
                    }
                    header = Some(*h);
                }
                TraceRecord::Header(_) => {
                    return Err(SimError::Trace {
                        line: line_no,
                        message: "header must be the first and only header record".into(),
                    })
                }
                _ if header.is_none() => {
                    return Err(SimError::Trace {
                        line: line_no,
                        message: "trace does not start with a header".into(),
                    })
                }
                r => records.push(r),
            }
        }
        let header = header.ok_or(SimError::Trace {
            line: 0,
            message: "empty trace".into(),
        })?;
        Ok(Self { header, records })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub scenario: String,
    pub steps: usize,
    pub min_distance: Option<f64>,
    pub min_true_distance: f64,
    pub max_abs_delta_deg: f64,
    pub max_speed: f64,
    pub mode_timeline: Vec<(f64, OperatingMode)>,
    pub final_mode: Option<OperatingMode>,
    pub final_status: Option<MonitorStatus>,
    pub levels: BTreeMap<String, LevelStats>,
}

pub fn summarize(trace: &RunTrace) -> TraceSummary {
    let mut min_distance: Option<f64> = None;
    let mut min_true = f64::INFINITY;
    let mut max_delta: f64 = 0.0;
    let mut max_speed: f64 = 0.0;
    let mut acc: BTreeMap<String, (f64, f64, f64, usize)> = BTreeMap::new();
    let mut last = None;
    for s in trace.steps() {
        if let Some(d) = s.distance {
            min_distance = Some(min_distance.map_or(d, |m| m.min(d)));
        }
        min_true = min_true.min(s.true_distance);
        max_delta = max_delta.max(s.delta.abs().to_degrees());
        max_speed = max_speed.max(s.v);
        for (id, &l) in &s.levels {
            let e = acc
                .entry(id.clone())
                .or_insert((f64::INFINITY, 0.0, f64::NEG_INFINITY, 0));
            e.0 = e.0.min(l);
            e.1 += l;
            e.2 = e.2.max(l);
            e.3 += 1;
        }
        last = Some(s);
    }
    let mut timeline = vec![(0.0, OperatingMode::Manual)];
    timeline.extend(trace.mode_changes().map(|m| (m.t, m.mode_to)));
    TraceSummary {
        scenario: trace.header.scenario.scenario.name.clone(),
        steps: trace.steps().count(),
        min_distance,
        min_true_distance: min_true,
        max_abs_delta_deg: max_delta,
        max_speed,
        mode_timeline: timeline,
        final_mode: last.map(|s| s.mode),
        final_status: last.map(|s| s.overall),
        levels: acc
            .into_iter()
            .map(|(id, (min, sum, max, n))| {
                (
                    id,
                    LevelStats {
                        min,
                        mean: sum / n as f64,
                        max,
                    },
                )
            })
            .collect(),
    }
}

impl TraceSummary {
    pub fn render_console(&self) -> String {
        let mut out = String::new();
        let fmt_opt = |d: Option<f64>| d.map_or("n/a".to_string(), |d| format!("{d:.4} m"));
        let _ = writeln!(out, "scenario: {} ({} steps)", self.scenario, self.steps);
        let _ = writeln!(
            out,
            "min distance (measured): {}",
            fmt_opt(self.min_distance)
        );
        let _ = writeln!(out, "min distance (true): {:.4} m", self.min_true_distance);
        let _ = writeln!(out, "max |delta|: {:.4} deg", self.max_abs_delta_deg);
        let timeline: Vec<String> = self
            .mode_timeline
            .iter()
            .map(|(t, m)| format!("{m}@{t:.1}s"))
            .collect();
        let _ = writeln!(out, "modes: {}", timeline.join(" -> "));
        let _ = writeln!(
            out,
            "final: mode {}, status {}",
            self.final_mode.map_or("n/a".into(), |m| m.to_string()),
            self.final_status.map_or("n/a".into(), |s| s.to_string())
        );
        out
    }

    pub fn render_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Run report: {}\n", self.scenario);
        let _ = writeln!(out, "| quantity | value |\n|---|---|");
        let _ = writeln!(out, "| steps | {} |", self.steps);
        let _ = writeln!(
            out,
            "| min measured distance | {} |",
            self.min_distance
                .map_or("n/a".into(), |d| format!("{d:.4} m"))
        );
        let _ = writeln!(
            out,
            "| min true distance | {:.4} m |",
            self.min_true_distance
        );
        let _ = writeln!(out, "| max steering | {:.4} deg |", self.max_abs_delta_deg);
        let _ = writeln!(out, "| max speed | {:.4} m/s |", self.max_speed);
        let _ = writeln!(
            out,
            "| final mode | {} |",
            self.final_mode.map_or("n/a".into(), |m| m.to_string())
        );
        let _ = writeln!(
            out,
            "| final status | {} |",
            self.final_status.map_or("n/a".into(), |s| s.to_string())
        );
        let _ = writeln!(out, "\n## Mode timeline\n");
        for (t, m) in &self.mode_timeline {
            let _ = writeln!(out, "- t = {t:.1} s: {m}");
        }
        let _ = writeln!(out, "\n## Performance levels\n");
        let _ = writeln!(out, "| node | min | mean | max |\n|---|---|---|---|");
        for (id, s) in &self.levels {
            let _ = writeln!(
                out,
                "| {id} | {:.4} | {:.4} | {:.4} |",
                s.min, s.mean, s.max
            );
        }
        out
    }
}
