//! Switching schedules under the average dwell-time constraint
//!
//! ```text
//! N(s, t) <= δ (t - s) + N₀    for all 0 <= s <= t
//! ```
//!
//! and the token automaton `τ ∈ [0, N₀]`, `τ̇ = δ` (saturated),
//! `τ⁺ = τ - 1` that generates exactly the admissible schedules.

use rand::Rng;
use thiserror::Error;

use crate::rng;

/// Slack used when comparing switch counts and token levels in floating
/// point.
pub const DWELL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("event {index} at t={time} is not after the previous event")]
    Unsorted { index: usize, time: f64 },
    #[error("event {index} has invalid time {time}")]
    BadTime { index: usize, time: f64 },
    #[error("event {index} repeats the previous target mode {mode}")]
    RepeatedTarget { index: usize, mode: usize },
    #[error("delta must be finite and >= 0, got {0}")]
    BadDelta(f64),
    #[error("n0 must be >= 1")]
    BadN0,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    /// 0-based target mode.
    pub target: usize,
}

impl SwitchEvent {
    pub fn new(time: f64, target: usize) -> Self {
        Self { time, target }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule {
    events: Vec<SwitchEvent>,
    delta: f64,
    n0: u32,
}

/// Outcome of checking a schedule against the dwell-time inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleVerdict {
    Valid,
    /// The first interval `[start, end]` (in event order) holding more
    /// switches than `δ (end - start) + N₀` allows.
    Violation {
        start: f64,
        end: f64,
        count: usize,
        allowance: f64,
    },
}

impl ScheduleVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ScheduleVerdict::Valid)
    }
}

impl SwitchSchedule {
    pub fn new(events: Vec<SwitchEvent>, delta: f64, n0: u32) -> Result<Self, ScheduleError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(ScheduleError::BadDelta(delta));
        }
        if n0 == 0 {
            return Err(ScheduleError::BadN0);
        }
        for (index, ev) in events.iter().enumerate() {
            if !(ev.time.is_finite() && ev.time >= 0.0) {
                return Err(ScheduleError::BadTime {
                    index,
                    time: ev.time,
                });
            }
            if index > 0 {
                let prev = events[index - 1];
                if ev.time <= prev.time {
                    return Err(ScheduleError::Unsorted {
                        index,
                        time: ev.time,
                    });
                }
                if ev.target == prev.target {
                    return Err(ScheduleError::RepeatedTarget {
                        index,
                        mode: ev.target,
                    });
                }
            }
        }
        Ok(Self { events, delta, n0 })
    }

    pub fn empty(delta: f64, n0: u32) -> Self {
        Self::new(Vec::new(), delta, n0).expect("empty schedule with valid parameters")
    }

    pub fn events(&self) -> &[SwitchEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n0(&self) -> u32 {
        self.n0
    }

    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    /// Checks the dwell-time inequality. The slack `δ(t - s) + N₀ - N(s, t)`
    /// is minimized over intervals whose endpoints are event times, so only
    /// those are examined.
    pub fn validate(&self) -> ScheduleVerdict {
        validate_times(&self.times(), self.delta, self.n0)
    }

    /// Runs the token automaton from `tau0` with flow rate `delta`.
    pub fn admitted_by_automaton(&self, tau0: f64) -> Result<(), BlockedJump> {
        automaton_admits(&self.times(), self.delta, self.n0, tau0)
    }
}

/// [`SwitchSchedule::validate`] on bare sorted times.
pub fn validate_times(times: &[f64], delta: f64, n0: u32) -> ScheduleVerdict {
    let n0 = f64::from(n0);
    for i in 0..times.len() {
        for j in i..times.len() {
            let count = j - i + 1;
            let allowance = delta * (times[j] - times[i]) + n0;
            if count as f64 > allowance + DWELL_TOL {
                return ScheduleVerdict::Violation {
                    start: times[i],
                    end: times[j],
                    count,
                    allowance,
                };
            }
        }
    }
    ScheduleVerdict::Valid
}

/// A jump the automaton refused: `τ < 1` at the event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockedJump {
    pub index: usize,
    pub time: f64,
    pub tau: f64,
}

/// Token level of the automaton: `min(N₀, τ_a + rate (t - t_a))`.
pub fn token_level(tau_anchor: f64, t_anchor: f64, rate: f64, n0: f64, t: f64) -> f64 {
    (tau_anchor + rate * (t - t_anchor)).min(n0)
}

pub fn jump_enabled(tau: f64) -> bool {
    tau >= 1.0 - DWELL_TOL
}

/// Feeds sorted event times through the token automaton.
pub fn automaton_admits(times: &[f64], rate: f64, n0: u32, tau0: f64) -> Result<(), BlockedJump> {
    let n0 = f64::from(n0);
    let (mut tau_a, mut t_a) = (tau0.min(n0), 0.0);
    for (index, &time) in times.iter().enumerate() {
        let tau = token_level(tau_a, t_a, rate, n0, time);
        if !jump_enabled(tau) {
            return Err(BlockedJump { index, time, tau });
        }
        tau_a = (tau - 1.0).max(0.0);
        t_a = time;
    }
    Ok(())
}

/// Generates a random admissible schedule.
///
/// Candidate times are drawn i.i.d. uniform on `[0, horizon)` and visited in
/// order; a candidate becomes a switch only when a full token is available.
/// The token count starts at `n0`, refills at rate `delta` and saturates at
/// `n0`. Targets are uniform over the modes other than the current one.
pub fn generate_schedule(
    seed: u64,
    delta: f64,
    n0: u32,
    horizon: f64,
    modes: usize,
    start_mode: usize,
) -> Result<SwitchSchedule, ScheduleError> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(ScheduleError::BadDelta(delta));
    }
    if n0 == 0 {
        return Err(ScheduleError::BadN0);
    }
    if modes < 2 || !(horizon > 0.0) {
        return SwitchSchedule::new(Vec::new(), delta, n0);
    }
    let mut rng = rng::seeded(seed);
    let candidates = (2.0 * (delta * horizon + f64::from(n0))).ceil().max(4.0) as usize;
    let mut times: Vec<f64> = (0..candidates)
        .map(|_| rng.random_range(0.0..horizon))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let n0_f = f64::from(n0);
    let (mut tau_a, mut t_a) = (n0_f, 0.0);
    let mut current = start_mode;
    let mut events = Vec::new();
    for time in times {
        let tau = token_level(tau_a, t_a, delta, n0_f, time);
        if tau < 1.0 {
            continue;
        }
        let mut target = rng.random_range(0..modes - 1);
        if target >= current {
            target += 1;
        }
        events.push(SwitchEvent::new(time, target));
        current = target;
        tau_a = tau - 1.0;
        t_a = time;
    }
    SwitchSchedule::new(events, delta, n0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(times: &[f64], delta: f64, n0: u32) -> SwitchSchedule {
        let events = times
            .iter()
            .enumerate()
            .map(|(i, &t)| SwitchEvent::new(t, i % 2))
            .collect();
        SwitchSchedule::new(events, delta, n0).unwrap()
    }

    #[test]
    fn single_event_always_valid() {
        for delta in [0.0, 0.01, 3.0] {
            assert!(sched(&[7.0], delta, 1).validate().is_valid());
        }
    }

    #[test]
    fn dense_events_violate() {
        match sched(&[5.0, 10.0, 15.0], 0.06, 1).validate() {
            ScheduleVerdict::Violation {
                start,
                end,
                count,
                allowance,
            } => {
                // [5,10] already holds 2 > 0.06·5 + 1 = 1.3
                assert_eq!((start, end, count), (5.0, 10.0, 2));
                assert!((allowance - 1.3).abs() < 1e-12);
            }
            ScheduleVerdict::Valid => panic!("expected violation"),
        }
    }

    #[test]
    fn spaced_events_valid() {
        // worst interval [0, 80]: 3 <= 0.06·80 + 1 = 5.8
        assert!(sched(&[0.0, 40.0, 80.0], 0.06, 1).validate().is_valid());
    }

    #[test]
    fn constructor_rejects_unsorted_and_repeats() {
        let e = |t, m| SwitchEvent::new(t, m);
        assert!(matches!(
            SwitchSchedule::new(vec![e(2.0, 1), e(1.0, 0)], 0.1, 1),
            Err(ScheduleError::Unsorted { index: 1, .. })
        ));
        assert!(matches!(
            SwitchSchedule::new(vec![e(1.0, 1), e(2.0, 1)], 0.1, 1),
            Err(ScheduleError::RepeatedTarget { index: 1, .. })
        ));
        assert!(SwitchSchedule::new(vec![e(-1.0, 1)], 0.1, 1).is_err());
        assert!(SwitchSchedule::new(vec![], -0.1, 1).is_err());
        assert!(SwitchSchedule::new(vec![], 0.1, 0).is_err());
    }

    #[test]
    fn zero_delta_allows_at_most_n0_switches() {
        for seed in 0..50 {
            let s = generate_schedule(seed, 0.0, 1, 500.0, 3, 0).unwrap();
            assert!(s.len() <= 1);
        }
    }

    #[test]
    fn generated_count_bound() {
        for seed in 0..200 {
            let s = generate_schedule(seed, 0.06, 1, 100.0, 2, 0).unwrap();
            assert!(s.len() <= 7, "seed {seed}: {}", s.len());
            assert!(s.validate().is_valid());
            assert!(s.admitted_by_automaton(1.0).is_ok());
        }
    }

    #[test]
    fn generated_targets_alternate_away_from_current() {
        let s = generate_schedule(5, 0.5, 3, 100.0, 4, 2).unwrap();
        let mut current = 2;
        for ev in s.events() {
            assert_ne!(ev.target, current);
            assert!(ev.target < 4);
            current = ev.target;
        }
    }

    #[test]
    fn automaton_blocks_second_jump_without_refill() {
        let err = automaton_admits(&[1.0, 2.0], 0.0, 1, 1.0).unwrap_err();
        assert_eq!(err.index, 1);
        assert!(automaton_admits(&[1.0, 40.0], 0.06, 1, 1.0).is_ok());
    }

    #[test]
    fn automaton_gate_after_growth() {
        // τ grows from 0 at rate 0.0338: τ(30) = 1.014 >= 1
        assert!(automaton_admits(&[30.0], 0.0338, 1, 0.0).is_ok());
        assert!(automaton_admits(&[29.0], 0.0338, 1, 0.0).is_err());
    }
}
