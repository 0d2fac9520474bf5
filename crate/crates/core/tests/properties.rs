use proptest::prelude::*;
use rekindle_core::metrics::{ignorance_rate, ConfigTimeline};
use rekindle_core::{
    Condition, DetectorState, DocumentUpdate, EpisodeId, EventKind, InteractionEvent,
    InterventionEpisode, Millis, Notification, PayloadKind, SessionConfig, SessionId, Signal,
    Slide, WorkDocument,
};

const QUANTUM: Millis = 100;

fn kind_strategy(with_hidden: bool) -> impl Strategy<Value = EventKind> {
    let kinds: Vec<EventKind> = EventKind::ALL
        .iter()
        .copied()
        .filter(|k| with_hidden || *k != EventKind::PageHidden)
        .collect();
    proptest::sample::select(kinds)
}

/// Sorted events on the quantum grid: (time, kind).
fn trace(with_hidden: bool) -> impl Strategy<Value = Vec<(Millis, EventKind)>> {
    prop::collection::vec((0u64..3_000, kind_strategy(with_hidden)), 0..40).prop_map(|mut v| {
        v.sort_by_key(|(t, _)| *t);
        v.into_iter().map(|(q, k)| (q * QUANTUM, k)).collect()
    })
}

/// Drives the detector over the grid, ticking before same-time events.
fn run(events: &[(Millis, EventKind)], cfg: &SessionConfig, end: Millis) -> Vec<Signal> {
    let sid = SessionId::new("p");
    let mut det = DetectorState::new(0);
    let mut out = Vec::new();
    let mut i = 0;
    let mut t = 0;
    while t <= end {
        out.extend(det.on_tick(t, cfg));
        while i < events.len() && events[i].0 == t {
            let ev = InteractionEvent::new(sid.clone(), t, events[i].1);
            out.extend(det.on_event(&ev, cfg).unwrap());
            i += 1;
        }
        t += QUANTUM;
    }
    out
}

/// Brute-force scan: for every interaction, the next interaction bounds a gap;
/// prompts land at `start + k*T` for every `k >= 1` that fits in the gap.
fn oracle(events: &[(Millis, EventKind)], t: Millis, end: Millis) -> (Vec<Millis>, Vec<Millis>) {
    let mut starts = vec![0];
    starts.extend(events.iter().filter(|(_, k)| k.is_interaction()).map(|(at, _)| *at));
    starts.dedup();
    let mut detections = Vec::new();
    let mut repeats = Vec::new();
    for (i, &s) in starts.iter().enumerate() {
        let bound = starts.get(i + 1).copied().unwrap_or(end);
        let mut k = 1;
        while s + k * t <= bound {
            if k == 1 {
                detections.push(s + t);
            } else {
                repeats.push(s + k * t);
            }
            k += 1;
        }
    }
    (detections, repeats)
}

fn times(signals: &[Signal], pick: fn(&Signal) -> bool) -> Vec<Millis> {
    signals.iter().filter(|s| pick(s)).map(Signal::at).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn detections_match_gap_scan(events in trace(true), t_secs in 1i64..120) {
        let cfg = SessionConfig::new(Condition::Proposed).with_threshold(t_secs);
        let end = 320_000;
        let signals = run(&events, &cfg, end);
        let (detections, _) = oracle(&events, cfg.threshold_ms(), end);
        prop_assert_eq!(
            times(&signals, |s| matches!(s, Signal::InterruptionDetected(_))),
            detections
        );
    }

    #[test]
    fn repeats_follow_cadence(events in trace(false), t_secs in 1i64..120) {
        let cfg = SessionConfig::new(Condition::Proposed).with_threshold(t_secs);
        let end = 320_000;
        let signals = run(&events, &cfg, end);
        let (_, repeats) = oracle(&events, cfg.threshold_ms(), end);
        prop_assert_eq!(times(&signals, |s| matches!(s, Signal::RepeatPrompt(_))), repeats);
    }

    #[test]
    fn signals_are_ordered_and_resumes_pair_with_detections(events in trace(true), t_secs in 1i64..60) {
        let cfg = SessionConfig::new(Condition::Proposed).with_threshold(t_secs);
        let signals = run(&events, &cfg, 320_000);
        prop_assert!(signals.windows(2).all(|w| w[0].at() <= w[1].at()));
        let mut open = false;
        for s in &signals {
            match s {
                Signal::InterruptionDetected(_) => { prop_assert!(!open); open = true; }
                Signal::Resumed(_) => { prop_assert!(open); open = false; }
                Signal::RepeatPrompt(_) => prop_assert!(open),
                Signal::AwayConfirmed(_) => {}
            }
        }
    }

    #[test]
    fn config_round_trips(t in 1i64..10_000, away in 1i64..10_000, retain in any::<bool>(),
                          window in proptest::option::of(1i64..1_000),
                          cond in proptest::sample::select(vec![Condition::Proposed, Condition::Control, Condition::None])) {
        let mut cfg = SessionConfig::new(cond).with_threshold(t).with_away_delay(away).with_retain_content(retain);
        cfg = cfg.with_progress_window(window);
        let json = serde_json::to_string(&cfg).unwrap();
        prop_assert_eq!(serde_json::from_str::<SessionConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn event_round_trips(at in any::<u32>(), kind in kind_strategy(true), delta in -500i64..500) {
        let mut ev = InteractionEvent::new(SessionId::new("r"), at as Millis, kind);
        if kind == EventKind::Key { ev.chars_delta = delta; }
        prop_assert!(ev.validate().is_ok());
        let json = serde_json::to_string(&ev).unwrap();
        prop_assert_eq!(serde_json::from_str::<InteractionEvent>(&json).unwrap(), ev);
    }

    #[test]
    fn deck_round_trips_and_append_grows(titles in prop::collection::vec("[A-Za-z ]{1,30}", 1..10),
                                         items in prop::collection::vec("[a-z ]{0,20}", 0..4),
                                         caption in proptest::option::of("[a-z ]{1,20}")) {
        let slides: Vec<Slide> = titles.iter().map(|t| {
            let s = Slide::new(t.clone()).with_items(items.clone());
            match &caption { Some(c) => s.with_caption(c.clone()), None => s }
        }).collect();
        let mut doc = WorkDocument::deck(slides);
        let json = serde_json::to_string(&doc).unwrap();
        prop_assert_eq!(&serde_json::from_str::<WorkDocument>(&json).unwrap(), &doc);
        let n = doc.slide_count();
        doc.apply(DocumentUpdate::AppendSlide(Slide::new("next"))).unwrap();
        prop_assert_eq!(doc.slide_count(), n + 1);
    }

    #[test]
    fn ignorance_partitions_notifications(gaps in prop::collection::vec(1u64..100_000, 1..8),
                                          resume_after in proptest::option::of(0u64..400_000),
                                          tail in 0u64..200_000) {
        let mut at = 50_000;
        let mut notes = Vec::new();
        for g in &gaps {
            notes.push(Notification { at, payload_kind: PayloadKind::Continuation, headline: String::new() });
            at += g;
        }
        let first = notes[0].at;
        let mut ep = InterventionEpisode::open(EpisodeId::nth(&SessionId::new("i"), 1), first);
        let last = notes.last().unwrap().at;
        ep.resumed_at = resume_after.map(|r| first + r).filter(|r| *r >= last);
        ep.notifications = notes;
        let tl = ConfigTimeline::new(SessionConfig::new(Condition::Proposed));
        let end = ep.resumed_at.unwrap_or(last) + tail;
        let ig = ignorance_rate(std::slice::from_ref(&ep), &tl, Some(end));
        prop_assert_eq!(ig.all.total() as usize, ep.notifications.len());
        prop_assert_eq!(ig.first_only.total(), 1);
        if ep.resumed_at.is_some() {
            prop_assert_eq!(ig.all.worked, 1);
            prop_assert_eq!(ig.all.pending, 0);
        }
    }
}
