//! Brute-force oracles over raw session logs.
//!
//! Everything here reads the JSONL as untyped JSON and re-derives the
//! expected behavior from first principles: a 100 ms grid scan for the
//! detector, and direct record scans for the metrics. No code from the
//! metrics module or the log reader is used.

#![allow(dead_code)]

use std::path::Path;

use serde_json::Value;

pub const GRID_MS: u64 = 100;

#[derive(Debug, Clone)]
pub enum Rec {
    Event { at: u64, kind: String, delta: i64 },
    Threshold { at: u64, secs: u64 },
    Signal { at: u64, kind: String },
    Notification { at: u64, episode: String, payload: String },
    Email { at: u64 },
}

#[derive(Debug, Clone)]
pub struct RawLog {
    pub condition: String,
    pub threshold_secs: u64,
    pub away_delay_secs: u64,
    pub window_secs: Option<u64>,
    pub end: Option<u64>,
    pub records: Vec<Rec>,
}

fn num(v: &Value, key: &str) -> u64 {
    v[key].as_u64().unwrap_or_else(|| panic!("{key} missing in {v}"))
}

pub fn read_log(path: &Path) -> RawLog {
    parse_log(&std::fs::read_to_string(path).unwrap())
}

pub fn parse_log(text: &str) -> RawLog {
    let mut log = RawLog {
        condition: String::new(),
        threshold_secs: 0,
        away_delay_secs: 0,
        window_secs: None,
        end: None,
        records: Vec::new(),
    };
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        if let Some(meta) = v.get("session_opened") {
            let cfg = &meta["config"];
            log.condition = cfg["condition"].as_str().unwrap().to_string();
            log.threshold_secs = num(cfg, "idle_threshold_t");
            log.away_delay_secs = num(cfg, "away_delay");
            log.window_secs = cfg["progress_window"].as_u64();
        } else if v.get("session_closed").is_some() {
            log.end = Some(num(&v, "at"));
        } else if let Some(kind) = v.get("kind") {
            log.records.push(Rec::Event {
                at: num(&v, "at"),
                kind: kind.as_str().unwrap().to_string(),
                delta: v["chars_delta"].as_i64().unwrap(),
            });
        } else if v.get("idle_threshold_t").is_some() {
            log.records.push(Rec::Threshold {
                at: num(&v, "at"),
                secs: num(&v, "idle_threshold_t"),
            });
        } else if let Some(kind) = v.get("signal_kind") {
            log.records.push(Rec::Signal {
                at: num(&v, "at"),
                kind: kind.as_str().unwrap().to_string(),
            });
        } else if let Some(n) = v.get("notification") {
            log.records.push(Rec::Notification {
                at: num(&v, "at"),
                episode: n["episode_id"].as_str().unwrap().to_string(),
                payload: n["payload_kind"].as_str().unwrap().to_string(),
            });
        } else if v.get("email").is_some() {
            log.records.push(Rec::Email { at: num(&v, "at") });
        }
    }
    log
}

fn is_interaction(kind: &str) -> bool {
    !matches!(kind, "blur" | "page_hidden")
}

impl RawLog {
    pub fn signals(&self, kind: &str) -> Vec<u64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Rec::Signal { at, kind: k } if k == kind => Some(*at),
                _ => None,
            })
            .collect()
    }

    pub fn notifications(&self) -> Vec<(u64, String, String)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Rec::Notification { at, episode, payload } => {
                    Some((*at, episode.clone(), payload.clone()))
                }
                _ => None,
            })
            .collect()
    }

    pub fn emails(&self) -> Vec<u64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Rec::Email { at } => Some(*at),
                _ => None,
            })
            .collect()
    }

    /// Threshold in ms in force at `t`: the last change at or before `t`.
    pub fn threshold_at(&self, t: u64) -> u64 {
        let mut secs = self.threshold_secs;
        for r in &self.records {
            if let Rec::Threshold { at, secs: s } = r {
                if *at <= t {
                    secs = *s;
                }
            }
        }
        secs * 1000
    }
}

/// What the detector should have done, from a tick on every grid point
/// followed by the logged events and threshold changes of that instant, in
/// log order. A threshold change is followed by an immediate re-check.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct DetectorOracle {
    pub detections: Vec<u64>,
    /// Prompt times per episode, detection first.
    pub prompts: Vec<Vec<u64>>,
    pub away_confirmations: Vec<u64>,
}

pub fn detector_oracle(log: &RawLog) -> DetectorOracle {
    #[derive(PartialEq)]
    enum Mode {
        Active,
        Intervening,
        Away,
    }
    let end = log.end.expect("session ended");
    let away_ms = log.away_delay_secs * 1000;
    let mut threshold = log.threshold_secs * 1000;
    let mut last_interaction = 0u64;
    let mut open = false;
    let mut mode = Mode::Active;
    let mut last_prompt = 0u64;
    let mut hidden_since: Option<u64> = None;
    let mut away_done = false;
    let mut out = DetectorOracle::default();

    let actions: Vec<&Rec> = log
        .records
        .iter()
        .filter(|r| matches!(r, Rec::Event { .. } | Rec::Threshold { .. }))
        .collect();
    let mut next = 0;

    let check = |t: u64,
                     threshold: u64,
                     open: &mut bool,
                     mode: &mut Mode,
                     last_prompt: &mut u64,
                     away_done: &mut bool,
                     hidden_since: Option<u64>,
                     last_interaction: u64,
                     out: &mut DetectorOracle| {
        let mut detected = false;
        if !*open && t - last_interaction >= threshold {
            *open = true;
            detected = true;
            *last_prompt = t;
            if *mode != Mode::Away {
                *mode = Mode::Intervening;
            }
            out.detections.push(t);
            out.prompts.push(vec![t]);
        }
        if let Some(since) = hidden_since {
            if !*away_done && t - since >= away_ms {
                *away_done = true;
                *mode = Mode::Away;
                out.away_confirmations.push(t);
            }
        }
        if *mode == Mode::Intervening && !detected && *open && t - *last_prompt >= threshold {
            *last_prompt = t;
            out.prompts.last_mut().unwrap().push(t);
        }
    };

    let mut t = 0;
    while t <= end {
        check(
            t,
            threshold,
            &mut open,
            &mut mode,
            &mut last_prompt,
            &mut away_done,
            hidden_since,
            last_interaction,
            &mut out,
        );
        while next < actions.len() {
            match actions[next] {
                Rec::Event { at, kind, .. } if *at == t => {
                    match kind.as_str() {
                        "page_hidden" => {
                            if hidden_since.is_none() {
                                hidden_since = Some(t);
                                away_done = false;
                            }
                        }
                        "blur" => {}
                        k => {
                            if k == "page_visible" {
                                hidden_since = None;
                                away_done = false;
                            }
                            last_interaction = t;
                            open = false;
                            mode = Mode::Active;
                        }
                    }
                }
                Rec::Threshold { at, secs } if *at == t => {
                    threshold = secs * 1000;
                    check(
                        t,
                        threshold,
                        &mut open,
                        &mut mode,
                        &mut last_prompt,
                        &mut away_done,
                        hidden_since,
                        last_interaction,
                        &mut out,
                    );
                }
                Rec::Event { at, .. } | Rec::Threshold { at, .. } => {
                    assert!(*at > t, "action at {at} is off the {GRID_MS} ms grid");
                    break;
                }
                _ => unreachable!(),
            }
            next += 1;
        }
        t += GRID_MS;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleMetrics {
    pub n_episodes: usize,
    pub n_notifications: usize,
    pub irt: Vec<u64>,
    /// (ignored, worked, pending)
    pub ignorance_all: (u64, u64, u64),
    pub ignorance_first: (u64, u64, u64),
    pub progress: Vec<u64>,
    pub progress_net: Vec<i64>,
    pub total: u64,
}

struct Ep {
    notes: Vec<u64>,
    resumed: Option<u64>,
}

/// Metrics by direct scan: notifications belong to the episode open when
/// they were logged.
pub fn metrics_oracle(log: &RawLog) -> OracleMetrics {
    let end = log.end.expect("session ended");
    let mut eps: Vec<Ep> = Vec::new();
    let mut open = false;
    for r in &log.records {
        match r {
            Rec::Signal { kind, .. } if kind == "interruption_detected" => {
                eps.push(Ep {
                    notes: Vec::new(),
                    resumed: None,
                });
                open = true;
            }
            Rec::Signal { at, kind } if kind == "resumed" && open => {
                eps.last_mut().unwrap().resumed = Some(*at);
                open = false;
            }
            Rec::Notification { at, .. } => {
                assert!(open, "notification outside an episode");
                eps.last_mut().unwrap().notes.push(*at);
            }
            _ => {}
        }
    }

    let verdict = |ep: &Ep, i: usize| -> usize {
        // 0 ignored, 1 worked, 2 pending
        let at = ep.notes[i];
        match (ep.resumed, ep.notes.get(i + 1)) {
            (Some(r), Some(&next)) => {
                if r < next {
                    1
                } else {
                    0
                }
            }
            (Some(_), None) => 1,
            (None, Some(_)) => 0,
            (None, None) => {
                if end - at >= log.threshold_at(at) {
                    0
                } else {
                    2
                }
            }
        }
    };
    let mut all = [0u64; 3];
    let mut first = [0u64; 3];
    let mut seen_first = false;
    for ep in &eps {
        for i in 0..ep.notes.len() {
            let v = verdict(ep, i);
            all[v] += 1;
            if !seen_first {
                first[v] += 1;
                seen_first = true;
            }
        }
    }

    let keys: Vec<(u64, i64)> = log
        .records
        .iter()
        .filter_map(|r| match r {
            Rec::Event { at, kind, delta } if kind == "key" => Some((*at, *delta)),
            _ => None,
        })
        .collect();
    let mut progress = Vec::new();
    let mut progress_net = Vec::new();
    for ep in &eps {
        if let Some(r) = ep.resumed {
            let w = log
                .window_secs
                .map(|s| s * 1000)
                .unwrap_or_else(|| log.threshold_at(r));
            let inside = keys.iter().filter(|(at, _)| *at >= r && *at < r + w);
            progress.push(inside.clone().filter(|(_, d)| *d > 0).map(|(_, d)| *d as u64).sum());
            progress_net.push(inside.map(|(_, d)| *d).sum());
        }
    }

    OracleMetrics {
        n_episodes: eps.len(),
        n_notifications: eps.iter().map(|e| e.notes.len()).sum(),
        irt: eps
            .iter()
            .filter_map(|e| Some(e.resumed? - *e.notes.first()?))
            .collect(),
        ignorance_all: (all[0], all[1], all[2]),
        ignorance_first: (first[0], first[1], first[2]),
        progress,
        progress_net,
        total: end,
    }
}

pub fn report_as_oracle(r: &rekindle_core::MetricsReport) -> OracleMetrics {
    let c = |x: &rekindle_core::metrics::IgnoranceCounts| (x.ignored, x.worked, x.pending);
    OracleMetrics {
        n_episodes: r.n_episodes,
        n_notifications: r.n_notifications,
        irt: r.interest_retrieval_times.clone(),
        ignorance_all: c(&r.ignorance.all),
        ignorance_first: c(&r.ignorance.first_only),
        progress: r.progress_after_resumption.clone(),
        progress_net: r.progress_net.clone(),
        total: r.total_task_time,
    }
}
