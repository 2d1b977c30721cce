//! Event-driven fixed-priority preemptive scheduling on one processor.
//!
//! All tasks release synchronously at `t = 0`. Jobs are never aborted: a job
//! that overruns its deadline keeps running, and later jobs of the same task
//! wait behind it. Time is exact (integer microseconds).

use std::collections::VecDeque;
use std::io::{self, Write};

use crate::taskmodel::{lcm_of, sort_by_priority, Task, TaskError, TaskSet, Time};

/// Bound on simulated hyper-periods before the backlog is declared divergent.
pub const MAX_STEADY_STATE_WINDOWS: u64 = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("horizon {horizon} is not a positive multiple of the hyper-period {hyper_period}")]
    Horizon { horizon: Time, hyper_period: Time },
    #[error("no steady state within {windows} hyper-periods of {hyper_period} (long-run overload)")]
    NoSteadyState { windows: u64, hyper_period: Time },
    #[error("no job records for task `{0}`")]
    UnknownTask(String),
}

/// One finished job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JobRecord {
    /// Index into the priority-ordered task list of the owning trace.
    pub task: usize,
    /// Release count, starting at 0.
    pub job: u64,
    pub release: Time,
    pub deadline: Time,
    pub finish: Time,
    /// `finish > deadline`; finishing exactly at the deadline is a hit.
    pub missed: bool,
}

impl JobRecord {
    pub fn response(&self) -> Time {
        self.finish - self.release
    }
}

/// Job records together with the priority-ordered tasks they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub tasks: Vec<Task>,
    pub jobs: Vec<JobRecord>,
}

impl Trace {
    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    pub fn jobs_of(&self, task: usize) -> impl Iterator<Item = &JobRecord> {
        self.jobs.iter().filter(move |j| j.task == task)
    }

    /// Worst observed response time of task `id` over all records.
    pub fn worst_response_time(&self, id: &str) -> Result<Time, ScheduleError> {
        let idx = self
            .task_index(id)
            .ok_or_else(|| ScheduleError::UnknownTask(id.to_string()))?;
        worst_response_time(&self.jobs, idx).ok_or_else(|| ScheduleError::UnknownTask(id.to_string()))
    }

    /// Per-job CSV: `task,index,release,finish,deadline,missed`, times in ms.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "task,index,release_ms,finish_ms,deadline_ms,missed")?;
        for j in &self.jobs {
            writeln!(
                out,
                "{},{},{:.3},{:.3},{:.3},{}",
                self.tasks[j.task].id,
                j.job,
                j.release.as_ms(),
                j.finish.as_ms(),
                j.deadline.as_ms(),
                j.missed
            )?;
        }
        Ok(())
    }
}

/// Largest `finish − release` among the records of `task`.
pub fn worst_response_time(records: &[JobRecord], task: usize) -> Option<Time> {
    records
        .iter()
        .filter(|j| j.task == task)
        .map(JobRecord::response)
        .max()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pending {
    job: u64,
    release: Time,
    remaining: Time,
}

/// Incremental simulator over priority-ordered tasks (index 0 highest).
struct Simulator<'a> {
    tasks: &'a [Task],
    queues: Vec<VecDeque<Pending>>,
    next_release: Vec<Time>,
    next_job: Vec<u64>,
    now: Time,
    finished: Vec<JobRecord>,
}

impl<'a> Simulator<'a> {
    fn new(tasks: &'a [Task]) -> Self {
        Self {
            tasks,
            queues: vec![VecDeque::new(); tasks.len()],
            next_release: vec![Time::ZERO; tasks.len()],
            next_job: vec![0; tasks.len()],
            now: Time::ZERO,
            finished: Vec::new(),
        }
    }

    /// Runs the processor up to `boundary`, releasing every job whose release
    /// time is strictly before it. Completions at exactly `boundary` are
    /// processed; releases at `boundary` are left for the next call.
    fn step_until(&mut self, boundary: Time) {
        loop {
            for (i, task) in self.tasks.iter().enumerate() {
                while self.next_release[i] <= self.now && self.next_release[i] < boundary {
                    self.queues[i].push_back(Pending {
                        job: self.next_job[i],
                        release: self.next_release[i],
                        remaining: task.wcet,
                    });
                    self.next_job[i] += 1;
                    self.next_release[i] += task.period;
                }
            }
            if self.now >= boundary {
                return;
            }
            let next_event = self
                .next_release
                .iter()
                .copied()
                .filter(|&r| r < boundary)
                .min()
                .unwrap_or(boundary);
            let Some(i) = self.queues.iter().position(|q| !q.is_empty()) else {
                self.now = next_event;
                continue;
            };
            let job = self.queues[i].front_mut().expect("non-empty queue");
            let finish = self.now + job.remaining;
            if finish <= next_event {
                let job = self.queues[i].pop_front().expect("non-empty queue");
                let deadline = job.release + self.tasks[i].deadline;
                self.finished.push(JobRecord {
                    task: i,
                    job: job.job,
                    release: job.release,
                    deadline,
                    finish,
                    missed: finish > deadline,
                });
                self.now = finish;
            } else {
                job.remaining -= next_event - self.now;
                self.now = next_event;
            }
        }
    }

    /// Pending work relative to the current instant, which must be a
    /// hyper-period boundary.
    fn backlog(&self) -> Vec<Vec<(u64, Time)>> {
        self.queues
            .iter()
            .map(|q| {
                q.iter()
                    .map(|p| ((self.now - p.release).as_us(), p.remaining))
                    .collect()
            })
            .collect()
    }

    fn has_pending_released_before(&self, t: Time) -> bool {
        self.queues
            .iter()
            .any(|q| q.front().is_some_and(|p| p.release < t))
    }

    /// Keeps simulating (with releases) until every job released before `t`
    /// has finished.
    fn drain_released_before(&mut self, t: Time, chunk: Time) {
        while self.has_pending_released_before(t) {
            let next = self.now + chunk;
            self.step_until(next);
        }
    }
}

fn max_period(tasks: &[Task]) -> Time {
    tasks.iter().map(|t| t.period).max().unwrap_or(Time(1))
}

/// Exact preemptive fixed-priority trace of every job released in
/// `[0, horizon)`. `horizon` must be a positive multiple of the hyper-period
/// of `tasks`, all of which need a priority.
pub fn simulate_schedule(tasks: &[Task], horizon: Time) -> Result<Trace, ScheduleError> {
    let sorted = sort_by_priority(tasks)?;
    let hyper = lcm_of(&sorted.iter().map(|t| t.period).collect::<Vec<_>>())?;
    if horizon == Time::ZERO || !horizon.as_us().is_multiple_of(hyper.as_us()) {
        return Err(ScheduleError::Horizon {
            horizon,
            hyper_period: hyper,
        });
    }
    let mut sim = Simulator::new(&sorted);
    sim.step_until(horizon);
    let mut windows = 0;
    while sim.has_pending_released_before(horizon) {
        if windows >= MAX_STEADY_STATE_WINDOWS {
            return Err(ScheduleError::NoSteadyState {
                windows,
                hyper_period: hyper,
            });
        }
        let next = sim.now + hyper;
        sim.step_until(next);
        windows += 1;
    }
    let mut jobs: Vec<JobRecord> = sim
        .finished
        .into_iter()
        .filter(|j| j.release < horizon)
        .collect();
    jobs.sort_by_key(|j| (j.task, j.job));
    Ok(Trace {
        tasks: sorted,
        jobs,
    })
}

/// A simulation that has reached a periodic regime.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub trace: Trace,
    pub hyper_period: Time,
    /// Index `w` of the reported steady window `[w·H, (w+1)·H)`.
    pub window: u64,
}

impl SteadyState {
    pub fn window_start(&self) -> Time {
        self.hyper_period * self.window
    }

    pub fn window_end(&self) -> Time {
        self.hyper_period * (self.window + 1)
    }

    /// Jobs released inside the steady window.
    pub fn window_jobs(&self) -> impl Iterator<Item = &JobRecord> {
        let (lo, hi) = (self.window_start(), self.window_end());
        self.trace
            .jobs
            .iter()
            .filter(move |j| j.release >= lo && j.release < hi)
    }
}

/// Simulates hyper-period after hyper-period until the backlog at two
/// consecutive boundaries coincides, then completes the following window.
pub fn run_to_steady_state(tasks: &[Task]) -> Result<SteadyState, ScheduleError> {
    let sorted = sort_by_priority(tasks)?;
    let hyper = lcm_of(&sorted.iter().map(|t| t.period).collect::<Vec<_>>())?;
    let mut sim = Simulator::new(&sorted);
    let mut previous = sim.backlog();
    for w in 1..=MAX_STEADY_STATE_WINDOWS {
        sim.step_until(hyper * w);
        let current = sim.backlog();
        if current == previous {
            let end = hyper * (w + 1);
            sim.step_until(end);
            sim.drain_released_before(end, max_period(&sorted));
            let mut jobs = std::mem::take(&mut sim.finished);
            jobs.retain(|j| j.release < end);
            jobs.sort_by_key(|j| (j.task, j.job));
            return Ok(SteadyState {
                trace: Trace {
                    tasks: sorted,
                    jobs,
                },
                hyper_period: hyper,
                window: w,
            });
        }
        previous = current;
    }
    Err(ScheduleError::NoSteadyState {
        windows: MAX_STEADY_STATE_WINDOWS,
        hyper_period: hyper,
    })
}

/// Per-job miss flags of the controller over one steady hyper-period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissPattern {
    pub bits: Vec<bool>,
}

impl MissPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn misses(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Delay factors `p_k` over one steady hyper-period. Entry `i` is the delay
/// at the deadline of the `i`-th controller job of the window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelaySequence {
    pub delays: Vec<usize>,
}

impl DelaySequence {
    pub fn new(delays: Vec<usize>) -> Self {
        Self { delays }
    }

    /// `N_c`.
    pub fn jobs_per_hyper_period(&self) -> usize {
        self.delays.len()
    }

    /// `p̂`.
    pub fn max_delay(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(1)
    }

    /// Delay at (periodically extended) index `k`.
    pub fn at(&self, k: usize) -> usize {
        self.delays[k % self.delays.len()]
    }
}

/// `(m, K)`: at most `m` misses in any `K` consecutive jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeaklyHardConstraint {
    pub m: usize,
    pub k: usize,
}

impl WeaklyHardConstraint {
    pub fn is_satisfied_by(&self, pattern: &MissPattern) -> bool {
        mine_mk(pattern, self.k) <= self.m
    }
}

/// Steady-state behaviour of the controller task.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerPattern {
    pub misses: MissPattern,
    pub delays: DelaySequence,
    /// Worst controller response time inside the steady window.
    pub worst_response: Time,
    pub hyper_period: Time,
    pub steady: SteadyState,
}

/// Simulates the controller and its higher-priority tasks to steady state and
/// extracts the miss pattern and delay factors of one hyper-period.
pub fn steady_state_pattern(ts: &TaskSet) -> Result<ControllerPattern, ScheduleError> {
    let tasks = ts.controller_and_higher()?;
    let steady = run_to_steady_state(&tasks)?;
    let ctrl = steady.trace.tasks.len() - 1;
    let period = steady.trace.tasks[ctrl].period;
    let n_c = (steady.hyper_period.as_us() / period.as_us()) as usize;

    let ctrl_jobs: Vec<&JobRecord> = steady.trace.jobs_of(ctrl).collect();
    // FIFO per task: finish times grow with the job index.
    let finishes: Vec<Time> = ctrl_jobs.iter().map(|j| j.finish).collect();
    debug_assert!(finishes.windows(2).all(|w| w[0] < w[1]));

    let first = steady.window * n_c as u64;
    let mut bits = Vec::with_capacity(n_c);
    let mut delays = Vec::with_capacity(n_c);
    for i in 0..n_c as u64 {
        let job = first + i;
        bits.push(ctrl_jobs[job as usize].missed);
        let k = job + 1;
        let t = period * k;
        let done = finishes.partition_point(|&f| f <= t) as u64;
        // Latest finished job is `done − 1`, so p = k − (done − 1).
        delays.push((k + 1 - done) as usize);
    }
    let worst_response = steady
        .window_jobs()
        .filter(|j| j.task == ctrl)
        .map(JobRecord::response)
        .max()
        .unwrap_or(Time::ZERO);
    Ok(ControllerPattern {
        misses: MissPattern::new(bits),
        delays: DelaySequence::new(delays),
        worst_response,
        hyper_period: steady.hyper_period,
        steady,
    })
}

/// Smallest `m` such that every `K` consecutive jobs of the periodic
/// extension of `pattern` contain at most `m` misses.
pub fn mine_mk(pattern: &MissPattern, k: usize) -> usize {
    let n = pattern.len();
    if n == 0 || k == 0 {
        return 0;
    }
    let total = pattern.misses();
    let (cycles, rest) = (k / n, k % n);
    let mut prefix = Vec::with_capacity(2 * n + 1);
    prefix.push(0usize);
    for i in 0..2 * n {
        prefix.push(prefix[i] + usize::from(pattern.bits[i % n]));
    }
    (0..n)
        .map(|s| cycles * total + prefix[s + rest] - prefix[s])
        .max()
        .unwrap_or(0)
}

/// Outcome of inserting the controller into a rate-monotonic task list.
#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    Feasible(TaskSet),
    /// Even the lowest priority makes `violated` miss a deadline.
    Infeasible { violated: String },
}

fn with_controller_at(regular: &[Task], ctrl: &Task, pos: usize) -> Vec<Task> {
    let mut tasks: Vec<Task> = regular.to_vec();
    tasks.insert(pos, ctrl.clone());
    for (i, t) in tasks.iter_mut().enumerate() {
        t.priority = Some(i as u32 + 1);
    }
    tasks
}

/// First regular task (in priority order) that misses a deadline when
/// `tasks` run to steady state, if any.
fn first_violation(tasks: &[Task]) -> Result<Option<String>, ScheduleError> {
    let lowest_regular = tasks
        .iter()
        .rev()
        .find(|t| !t.is_controller())
        .map(|t| t.id.clone());
    match run_to_steady_state(tasks) {
        Ok(steady) => Ok(steady
            .trace
            .jobs
            .iter()
            .filter(|j| j.missed && !steady.trace.tasks[j.task].is_controller())
            .min_by_key(|j| j.task)
            .map(|j| steady.trace.tasks[j.task].id.clone())),
        Err(ScheduleError::NoSteadyState { .. }) => Ok(lowest_regular),
        Err(e) => Err(e),
    }
}

/// Inserts `ctrl` at the highest priority that leaves every regular task
/// free of deadline misses (checked over the transient and one steady
/// hyper-period).
pub fn place_controller_priority(regular: &[Task], ctrl: &Task) -> Result<Placement, ScheduleError> {
    let n = regular.len();
    let mut violated = None;
    for pos in 0..=n {
        let tasks = with_controller_at(regular, ctrl, pos);
        // Below every regular task the controller cannot disturb them.
        let checked: Vec<Task> = if pos == n {
            tasks[..n].to_vec()
        } else {
            tasks.clone()
        };
        let violation = if checked.is_empty() {
            None
        } else {
            first_violation(&checked)?
        };
        match violation {
            None => return Ok(Placement::Feasible(TaskSet::new(tasks)?)),
            Some(id) => violated = Some(id),
        }
    }
    Ok(Placement::Infeasible {
        violated: violated.unwrap_or_default(),
    })
}
