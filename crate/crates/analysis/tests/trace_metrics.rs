//! Trace metrics checked against oracles that rebuild each quantity from the
//! raw event log, without looking at the final task state.

use std::collections::BTreeMap;
use std::sync::Arc;

use interlace_analysis::metrics::TraceFlag;
use interlace_analysis::{compute_trace_metrics, AnalysisConfig, MetricBank, TraceMetrics};
use interlace_core::banks::TaskBanks;
use interlace_core::lm::RetryPolicy;
use interlace_core::survey::SurveyBank;
use interlace_core::tasks::{BankAdapter, TaskAdapter, TaskConfig};
use interlace_core::trace::{
    ActionKind, ActionOutcome, EventBody, InteractionTrace, Millis, Payload, Session, SessionId, SessionState,
    UserAction,
};
use interlace_core::{Blocklist, LmClient, MockBackend, TaskKind, TaskState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T0: Millis = 5_000_000;

fn client() -> LmClient {
    LmClient::new(Arc::new(MockBackend::for_model("mock-beta")), Blocklist::bundled())
        .with_retry(RetryPolicy::immediate())
}

fn start<'a>(kind: TaskKind, seed: u64, lm: &'a LmClient, surveys: &'a SurveyBank) -> Session<'a> {
    let adapter = BankAdapter::new(kind, Arc::new(TaskBanks::bundled()), TaskConfig::default());
    let state = SessionState::new(SessionId(format!("{kind}-m-{seed}")), adapter.initial_state(seed, T0), T0);
    Session::start(state, "tester", T0, lm, surveys)
}

fn metrics(trace: &InteractionTrace) -> TraceMetrics {
    let config = AnalysisConfig { exclude_failed_attention: false, ..AnalysisConfig::default() };
    compute_trace_metrics(trace, &SurveyBank::bundled(), &MetricBank::bundled(), &config)
}

/// Applied user actions in log order.
fn applied(trace: &InteractionTrace) -> Vec<&UserAction> {
    trace
        .events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::UserAction { action, outcome: ActionOutcome::Applied, .. } => Some(action),
            _ => None,
        })
        .collect()
}

fn is_click(a: &UserAction, button: &str) -> bool {
    a.kind == ActionKind::ClickButton && a.target_field.as_deref() == Some(button)
}

fn choice(a: &UserAction, field: &str) -> Option<usize> {
    match (&a.kind, a.target_field.as_deref(), &a.payload) {
        (ActionKind::SelectOption, Some(f), Some(Payload::Choice(c))) if f == field => Some(*c),
        _ => None,
    }
}

fn initial_task(trace: &InteractionTrace) -> &TaskState {
    match &trace.events[0].body {
        EventBody::StateSnapshot { state, .. } => &state.task,
        _ => panic!("trace starts with a snapshot"),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

fn qa_trace(seed: u64) -> InteractionTrace {
    let lm = client();
    let surveys = SurveyBank::bundled();
    let mut s = start(TaskKind::Qa, seed, &lm, &surveys);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut now = T0;
    let mut tick = |rng: &mut ChaCha8Rng| {
        now += rng.random_range(500..20_000);
        now
    };
    while s.state().ended.is_none() {
        for _ in 0..rng.random_range(0..4) {
            let t = tick(&mut rng);
            s.apply(UserAction::type_text("user_input", "what is the answer?", t));
            let t = tick(&mut rng);
            s.apply(UserAction::click("generate", t));
        }
        let t = tick(&mut rng);
        s.apply(UserAction::select("choice", rng.random_range(0..4), t));
        let t = tick(&mut rng);
        s.apply(UserAction::click("next", t));
    }
    s.into_trace()
}

struct QaOracle {
    assisted_acc: Option<f64>,
    unassisted_acc: Option<f64>,
    mean_queries: Option<f64>,
    mean_minutes: Option<f64>,
    attention_passed: bool,
}

fn qa_oracle(trace: &InteractionTrace) -> QaOracle {
    let TaskState::Qa(q) = initial_task(trace) else { panic!() };
    let mut idx = 0;
    let mut chosen = None;
    let mut shown = trace.header.created_at;
    let mut queries = vec![0usize; q.quiz.len()];
    let mut hits: BTreeMap<bool, (usize, usize)> = BTreeMap::new();
    let (mut q_sum, mut t_sum, mut n_assisted) = (0.0, 0.0, 0usize);
    let mut attention_passed = false;
    for a in applied(trace) {
        if is_click(a, "generate") {
            queries[idx] += 1;
        } else if let Some(c) = choice(a, "choice") {
            chosen = Some(c);
        } else if is_click(a, "next") {
            let item = &q.quiz[idx];
            let correct = chosen == Some(item.question.gold);
            if item.is_attention_check {
                attention_passed = correct;
            } else {
                let e = hits.entry(item.assisted).or_default();
                e.0 += usize::from(correct);
                e.1 += 1;
                if item.assisted {
                    q_sum += queries[idx] as f64;
                    t_sum += (a.timestamp - shown) as f64 / 60_000.0;
                    n_assisted += 1;
                }
            }
            shown = a.timestamp;
            chosen = None;
            idx += 1;
        }
    }
    let acc = |assisted| hits.get(&assisted).map(|&(h, n)| 100.0 * h as f64 / n as f64);
    let avg = |sum: f64| (n_assisted > 0).then(|| sum / n_assisted as f64);
    QaOracle {
        assisted_acc: acc(true),
        unassisted_acc: acc(false),
        mean_queries: avg(q_sum),
        mean_minutes: avg(t_sum),
        attention_passed,
    }
}

#[test]
fn qa_metrics_match_event_scan() {
    for seed in 0..12 {
        let trace = qa_trace(seed);
        let m = metrics(&trace);
        let o = qa_oracle(&trace);
        assert_eq!(m.value("accuracy"), o.assisted_acc, "seed {seed}");
        assert_eq!(m.value("accuracy_unassisted"), o.unassisted_acc, "seed {seed}");
        assert!(close(m.value("queries").unwrap(), o.mean_queries.unwrap()), "seed {seed}");
        assert!(close(m.value("time").unwrap(), o.mean_minutes.unwrap()), "seed {seed}");
        assert_eq!(m.flags.contains(&TraceFlag::AttentionCheckFailed), !o.attention_passed, "seed {seed}");
    }
}

#[test]
fn failed_attention_check_excludes_by_default() {
    let failing = (0..40)
        .map(qa_trace)
        .find(|t| !qa_oracle(t).attention_passed)
        .expect("some seed misses the attention check");
    let m = compute_trace_metrics(&failing, &SurveyBank::bundled(), &MetricBank::bundled(), &AnalysisConfig::default());
    assert!(m.excluded);
    assert!(!metrics(&failing).excluded);
}

fn metaphor_trace(seed: u64) -> InteractionTrace {
    let lm = client();
    let surveys = SurveyBank::bundled();
    let mut s = start(TaskKind::Metaphor, seed, &lm, &surveys);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let mut now = T0;
    for k in 0..6 {
        for _ in 0..rng.random_range(0..3) {
            now += 3_000;
            s.apply(UserAction::click("get_suggestions", now));
            now += 3_000;
            if rng.random_bool(0.5) {
                s.apply(UserAction::select("suggestions", rng.random_range(0..5), now));
            } else {
                s.apply(UserAction::click("dismiss", now));
            }
        }
        now += rng.random_range(1_000..60_000);
        s.apply(UserAction::type_text("user_input", format!("Sentence number {k} of mine."), now));
        now += 1_000;
        s.apply(UserAction::click("submit", now));
    }
    now += 1_000;
    s.apply(UserAction::finish(now));
    s.into_trace()
}

#[test]
fn metaphor_metrics_match_event_scan() {
    for seed in 0..12 {
        let trace = metaphor_trace(seed);
        let m = metrics(&trace);
        let actions = applied(&trace);

        let selected = actions.iter().filter(|a| choice(a, "suggestions").is_some()).count();
        let dismissed = actions.iter().filter(|a| is_click(a, "dismiss")).count();
        let expected = (selected + dismissed > 0).then(|| 100.0 * selected as f64 / (selected + dismissed) as f64);
        assert_eq!(m.value("acceptance"), expected, "seed {seed}");

        let (mut per_sentence, mut current) = (Vec::new(), 0usize);
        let (mut times, mut started) = (Vec::new(), trace.header.created_at);
        for a in &actions {
            if is_click(a, "get_suggestions") {
                current += 1;
            } else if is_click(a, "submit") {
                per_sentence.push(current as f64);
                times.push((a.timestamp - started) as f64 / 60_000.0);
                current = 0;
                started = a.timestamp;
            }
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(close(m.value("queries").unwrap(), mean(&per_sentence)), "seed {seed}");
        assert!(close(m.value("time").unwrap(), mean(&times)), "seed {seed}");
    }
}

#[test]
fn crossword_metrics_match_event_scan() {
    let lm = client();
    let surveys = SurveyBank::bundled();
    for seed in 0..6 {
        let mut s = start(TaskKind::Crossword, seed, &lm, &surveys);
        let TaskState::Crossword(c) = &s.state().task else { panic!() };
        let slots: Vec<(usize, usize, char)> =
            c.letter_slots().map(|(r, col)| (r, col, c.solution_at(r, col).unwrap())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 200);
        let mut now = T0;
        for &(r, col, ch) in &slots {
            now += 1_000;
            let letter = match rng.random_range(0..4) {
                0 => continue,
                1 => 'q',
                _ => ch,
            };
            s.apply(UserAction::enter_letter(r, col, Some(letter), now));
            if rng.random_bool(0.2) {
                now += 1_000;
                s.apply(UserAction::type_text("user_input", "hint please", now));
                now += 1_000;
                s.apply(UserAction::click("send", now));
            }
        }
        now += 1_000;
        s.apply(UserAction::finish(now));
        let trace = s.into_trace();
        let m = metrics(&trace);

        let mut grid: BTreeMap<(usize, usize), char> = BTreeMap::new();
        for a in applied(&trace) {
            if let Some(Payload::Letter { row, col, letter }) = &a.payload {
                match letter {
                    Some(l) => grid.insert((*row, *col), l.to_ascii_uppercase()),
                    None => grid.remove(&(*row, *col)),
                };
            }
        }
        let right = slots.iter().filter(|(r, c, ch)| grid.get(&(*r, *c)) == Some(&ch.to_ascii_uppercase())).count();
        assert!(close(m.value("accuracy_letter").unwrap(), 100.0 * right as f64 / slots.len() as f64));
        let sent = trace.events.iter().filter(|e| matches!(e.body, EventBody::LmRequest { .. })).count();
        assert_eq!(m.value("queries"), Some(sent as f64));
    }
}
