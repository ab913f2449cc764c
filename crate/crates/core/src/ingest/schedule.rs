//! Crawl scheduling with single-flight runs.

use std::sync::{Arc, Mutex};

use chrono::{DateTime, Months, Utc};
use serde::{Deserialize, Serialize};

/// True once a full `period_months` has passed since `last_run`.
pub fn scheduler_tick(now: DateTime<Utc>, last_run: Option<DateTime<Utc>>, period_months: u32) -> bool {
    match last_run {
        None => true,
        Some(last) => match last.checked_add_months(Months::new(period_months)) {
            Some(due) => now >= due,
            None => false,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelinePhase {
    Idle,
    CrawlSources,
}

#[derive(Debug)]
struct Inner {
    phase: PipelinePhase,
    last_run: Option<DateTime<Utc>>,
}

/// Decides when a crawl is due and keeps at most one in flight.
#[derive(Debug, Clone)]
pub struct Scheduler {
    period_months: u32,
    inner: Arc<Mutex<Inner>>,
}

/// Held while a run is in progress; finish it with [`RunGuard::complete`].
/// Dropping it without completing returns the scheduler to idle without
/// recording a run.
#[derive(Debug)]
pub struct RunGuard {
    inner: Arc<Mutex<Inner>>,
    completed: bool,
}

impl RunGuard {
    pub fn complete(mut self, finished_at: DateTime<Utc>) {
        let mut g = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        g.phase = PipelinePhase::Idle;
        g.last_run = Some(finished_at);
        self.completed = true;
    }
}

impl Drop for RunGuard {
    fn drop(&mut self) {
        if !self.completed {
            self.inner.lock().unwrap_or_else(|p| p.into_inner()).phase = PipelinePhase::Idle;
        }
    }
}

impl Scheduler {
    pub fn new(period_months: u32, last_run: Option<DateTime<Utc>>) -> Self {
        Self {
            period_months,
            inner: Arc::new(Mutex::new(Inner {
                phase: PipelinePhase::Idle,
                last_run,
            })),
        }
    }

    /// Monthly schedule.
    pub fn monthly(last_run: Option<DateTime<Utc>>) -> Self {
        Self::new(1, last_run)
    }

    pub fn phase(&self) -> PipelinePhase {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).phase
    }

    pub fn last_run(&self) -> Option<DateTime<Utc>> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).last_run
    }

    /// Starts a run when one is due and none is in flight.
    pub fn tick(&self, now: DateTime<Utc>) -> Option<RunGuard> {
        let mut g = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        if g.phase != PipelinePhase::Idle || !scheduler_tick(now, g.last_run, self.period_months) {
            return None;
        }
        g.phase = PipelinePhase::CrawlSources;
        Some(RunGuard {
            inner: self.inner.clone(),
            completed: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};

    fn t(y: i32, m: u32, d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, 9, 0, 0).unwrap()
    }

    #[test]
    fn elapsed_month() {
        let now = t(2025, 3, 31);
        assert!(scheduler_tick(now, Some(now - Duration::days(31)), 1));
        assert!(!scheduler_tick(now, Some(now), 1));
        assert!(!scheduler_tick(t(2025, 2, 27), Some(t(2025, 1, 28)), 1));
        assert!(scheduler_tick(t(2025, 2, 28), Some(t(2025, 1, 28)), 1));
        assert!(scheduler_tick(now, None, 1));
    }

    #[test]
    fn single_flight() {
        let s = Scheduler::monthly(None);
        let now = t(2025, 1, 1);
        let guard = s.tick(now).expect("due");
        assert_eq!(s.phase(), PipelinePhase::CrawlSources);
        assert!(s.tick(now).is_none());
        guard.complete(now);
        assert_eq!(s.phase(), PipelinePhase::Idle);
        assert!(s.tick(now + Duration::days(1)).is_none());
        assert!(s.tick(now + Duration::days(31)).is_some());
    }

    #[test]
    fn abandoned_run_does_not_count() {
        let s = Scheduler::monthly(None);
        drop(s.tick(t(2025, 1, 1)).unwrap());
        assert_eq!(s.last_run(), None);
        assert!(s.tick(t(2025, 1, 1)).is_some());
    }
}
