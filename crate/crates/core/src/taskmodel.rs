//! Periodic task model: periods, execution times, priorities and the
//! designated controller task.

use std::collections::HashSet;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub, SubAssign};

/// Exact time in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Time(pub u64);

impl Time {
    pub const ZERO: Time = Time(0);

    pub const fn from_us(us: u64) -> Self {
        Time(us)
    }

    pub const fn from_ms(ms: u64) -> Self {
        Time(ms * 1000)
    }

    /// Converts milliseconds to the microsecond grid, rejecting values that
    /// are negative, non-finite or off-grid.
    pub fn from_ms_f64(ms: f64) -> Option<Self> {
        if !ms.is_finite() || ms < 0.0 {
            return None;
        }
        let us = ms * 1000.0;
        let rounded = us.round();
        ((us - rounded).abs() <= 1e-6 * us.max(1.0)).then_some(Time(rounded as u64))
    }

    pub const fn as_us(self) -> u64 {
        self.0
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Whole milliseconds, if this time lies on the millisecond grid.
    pub fn whole_ms(self) -> Option<u64> {
        self.0.is_multiple_of(1000).then_some(self.0 / 1000)
    }

    /// `⌈self / rhs⌉`.
    pub fn div_ceil(self, rhs: Time) -> u64 {
        self.0.div_ceil(rhs.0)
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl AddAssign for Time {
    fn add_assign(&mut self, rhs: Time) {
        self.0 += rhs.0;
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl SubAssign for Time {
    fn sub_assign(&mut self, rhs: Time) {
        self.0 -= rhs.0;
    }
}

impl Mul<u64> for Time {
    type Output = Time;
    fn mul(self, rhs: u64) -> Time {
        Time(self.0 * rhs)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(1000) {
            write!(f, "{}ms", self.0 / 1000)
        } else {
            write!(f, "{}.{:03}ms", self.0 / 1000, self.0 % 1000)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    /// Regular task: no deadline miss is tolerated.
    Hard,
    /// The control task, which may miss deadlines.
    Controller,
}

/// Fixed priority; a lower number is a higher priority.
pub type Priority = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: String,
    pub period: Time,
    pub deadline: Time,
    pub wcet: Time,
    pub priority: Option<Priority>,
    pub kind: TaskKind,
}

impl Task {
    /// Regular task with implicit deadline.
    pub fn hard(id: impl Into<String>, period: Time, wcet: Time) -> Self {
        Self {
            id: id.into(),
            period,
            deadline: period,
            wcet,
            priority: None,
            kind: TaskKind::Hard,
        }
    }

    /// Controller task; its deadline always equals its period.
    pub fn controller(id: impl Into<String>, period: Time, wcet: Time) -> Self {
        Self {
            kind: TaskKind::Controller,
            ..Self::hard(id, period, wcet)
        }
    }

    pub fn with_priority(mut self, priority: Priority) -> Self {
        self.priority = Some(priority);
        self
    }

    pub fn with_deadline(mut self, deadline: Time) -> Self {
        self.deadline = deadline;
        self
    }

    pub fn utilization(&self) -> f64 {
        self.wcet.0 as f64 / self.period.0 as f64
    }

    pub fn is_controller(&self) -> bool {
        self.kind == TaskKind::Controller
    }

    fn validate(&self) -> Result<(), TaskError> {
        let bad = |reason: &str| TaskError::InvalidTask {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.period == Time::ZERO {
            return Err(bad("period must be positive"));
        }
        if self.deadline == Time::ZERO {
            return Err(bad("deadline must be positive"));
        }
        if self.wcet == Time::ZERO {
            return Err(bad("execution time must be positive"));
        }
        if self.is_controller() && self.deadline != self.period {
            return Err(bad("controller deadline must equal its period"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("task `{id}`: {reason}")]
    InvalidTask { id: String, reason: String },
    #[error("duplicate task id `{0}`")]
    DuplicateId(String),
    #[error("priority {0} is assigned to more than one task")]
    DuplicatePriority(Priority),
    #[error("task set needs exactly one controller task, found {0}")]
    ControllerCount(usize),
    #[error("task `{0}` has no priority")]
    Unprioritized(String),
    #[error("hyper-period of periods {periods:?} overflows")]
    HyperPeriodOverflow { periods: Vec<Time> },
}

/// Tasks sharing one processor, exactly one of which is the controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    tasks: Vec<Task>,
    controller: usize,
}

impl TaskSet {
    pub fn new(tasks: Vec<Task>) -> Result<Self, TaskError> {
        let mut ids = HashSet::new();
        let mut prios = HashSet::new();
        for t in &tasks {
            t.validate()?;
            if !ids.insert(t.id.as_str()) {
                return Err(TaskError::DuplicateId(t.id.clone()));
            }
            if let Some(p) = t.priority {
                if !prios.insert(p) {
                    return Err(TaskError::DuplicatePriority(p));
                }
            }
        }
        let controllers: Vec<usize> = tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_controller())
            .map(|(i, _)| i)
            .collect();
        if controllers.len() != 1 {
            return Err(TaskError::ControllerCount(controllers.len()));
        }
        Ok(Self {
            controller: controllers[0],
            tasks,
        })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn controller(&self) -> &Task {
        &self.tasks[self.controller]
    }

    pub fn regular(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| !t.is_controller())
    }

    pub fn get(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Tasks ordered from highest to lowest priority.
    pub fn by_priority(&self) -> Result<Vec<Task>, TaskError> {
        sort_by_priority(&self.tasks)
    }

    /// The controller and every task with a strictly higher priority, ordered
    /// from highest priority down to the controller.
    pub fn controller_and_higher(&self) -> Result<Vec<Task>, TaskError> {
        let ctrl_prio = self
            .controller()
            .priority
            .ok_or_else(|| TaskError::Unprioritized(self.controller().id.clone()))?;
        let sorted = self.by_priority()?;
        Ok(sorted
            .into_iter()
            .filter(|t| t.priority.is_some_and(|p| p <= ctrl_prio))
            .collect())
    }
}

pub(crate) fn sort_by_priority(tasks: &[Task]) -> Result<Vec<Task>, TaskError> {
    if let Some(t) = tasks.iter().find(|t| t.priority.is_none()) {
        return Err(TaskError::Unprioritized(t.id.clone()));
    }
    let mut sorted = tasks.to_vec();
    sorted.sort_by_key(|t| t.priority);
    Ok(sorted)
}

/// `Σ C_i / T_i`, optionally leaving out the controller.
pub fn utilization(ts: &TaskSet, include_controller: bool) -> f64 {
    ts.tasks()
        .iter()
        .filter(|t| include_controller || !t.is_controller())
        .map(Task::utilization)
        .sum()
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Least common multiple of the given periods.
pub fn lcm_of(periods: &[Time]) -> Result<Time, TaskError> {
    let mut acc: u64 = 1;
    for p in periods {
        let g = gcd(acc, p.0);
        acc = (acc / g)
            .checked_mul(p.0)
            .ok_or_else(|| TaskError::HyperPeriodOverflow {
                periods: periods.to_vec(),
            })?;
    }
    Ok(Time(acc))
}

/// LCM of the periods of every task whose priority is at least `upto`
/// (numerically `<= upto`).
pub fn hyper_period(ts: &TaskSet, upto: Priority) -> Result<Time, TaskError> {
    let periods: Vec<Time> = ts
        .tasks()
        .iter()
        .filter(|t| t.priority.is_some_and(|p| p <= upto))
        .map(|t| t.period)
        .collect();
    lcm_of(&periods)
}

/// Controller hyper-period: the controller's period together with every
/// strictly higher-priority task.
pub fn controller_hyper_period(ts: &TaskSet) -> Result<Time, TaskError> {
    let prio = ts
        .controller()
        .priority
        .ok_or_else(|| TaskError::Unprioritized(ts.controller().id.clone()))?;
    hyper_period(ts, prio)
}

/// Rate-monotonic priorities `1..=n`: shorter period first, ties by id.
pub fn assign_rm_priorities(tasks: &[Task]) -> Vec<Task> {
    let mut sorted = tasks.to_vec();
    sorted.sort_by(|a, b| a.period.cmp(&b.period).then_with(|| a.id.cmp(&b.id)));
    for (i, t) in sorted.iter_mut().enumerate() {
        t.priority = Some(i as Priority + 1);
    }
    sorted
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: u64) -> Time {
        Time::from_ms(v)
    }

    #[test]
    fn utilization_examples() {
        let ctrl = Task::controller("c", ms(4), ms(2));
        let ts = TaskSet::new(vec![ctrl.clone()]).unwrap();
        assert_eq!(utilization(&ts, true), 0.5);
        let ts = TaskSet::new(vec![ctrl, Task::hard("b", ms(6), ms(3))]).unwrap();
        assert_eq!(utilization(&ts, true), 1.0);
        assert_eq!(utilization(&ts, false), 0.5);
    }

    #[test]
    fn hyper_period_examples() {
        let ts = TaskSet::new(vec![
            Task::hard("hi", ms(4), ms(1)).with_priority(1),
            Task::controller("c", ms(6), ms(1)).with_priority(2),
            Task::hard("lo", ms(7), ms(1)).with_priority(3),
        ])
        .unwrap();
        assert_eq!(controller_hyper_period(&ts).unwrap(), ms(12));

        let alone = TaskSet::new(vec![Task::controller("c", ms(5), ms(1)).with_priority(1)]).unwrap();
        assert_eq!(controller_hyper_period(&alone).unwrap(), ms(5));
    }

    #[test]
    fn lcm_overflow_is_reported() {
        let huge = [Time(u64::MAX - 1), Time(u64::MAX - 2)];
        assert!(matches!(
            lcm_of(&huge),
            Err(TaskError::HyperPeriodOverflow { .. })
        ));
    }

    #[test]
    fn rm_order_and_tie_break() {
        let tasks = vec![
            Task::hard("a", ms(300), ms(1)),
            Task::hard("b", ms(60), ms(1)),
            Task::hard("c", ms(120), ms(1)),
        ];
        let rm = assign_rm_priorities(&tasks);
        let periods: Vec<u64> = rm.iter().map(|t| t.period.whole_ms().unwrap()).collect();
        assert_eq!(periods, [60, 120, 300]);
        assert_eq!(rm[0].priority, Some(1));

        let same = vec![
            Task::hard("z", ms(10), ms(1)),
            Task::hard("x", ms(10), ms(1)),
            Task::hard("y", ms(10), ms(1)),
        ];
        let ids: Vec<String> = assign_rm_priorities(&same).into_iter().map(|t| t.id).collect();
        assert_eq!(ids, ["x", "y", "z"]);
    }

    #[test]
    fn task_set_invariants() {
        let c = Task::controller("c", ms(5), ms(1));
        assert_eq!(
            TaskSet::new(vec![Task::hard("a", ms(5), ms(1))]),
            Err(TaskError::ControllerCount(0))
        );
        assert!(matches!(
            TaskSet::new(vec![c.clone(), Task::hard("c", ms(5), ms(1))]),
            Err(TaskError::DuplicateId(_))
        ));
        assert!(matches!(
            TaskSet::new(vec![
                c.clone().with_priority(1),
                Task::hard("a", ms(5), ms(1)).with_priority(1)
            ]),
            Err(TaskError::DuplicatePriority(1))
        ));
        assert!(matches!(
            TaskSet::new(vec![c.clone().with_deadline(ms(4))]),
            Err(TaskError::InvalidTask { .. })
        ));
        assert!(matches!(
            TaskSet::new(vec![Task::controller("c", ms(5), Time::ZERO)]),
            Err(TaskError::InvalidTask { .. })
        ));
    }

    #[test]
    fn time_grid() {
        assert_eq!(Time::from_ms_f64(15.0), Some(Time(15_000)));
        assert_eq!(Time::from_ms_f64(0.125), Some(Time(125)));
        assert_eq!(Time::from_ms_f64(0.0001), None);
        assert_eq!(Time::from_ms_f64(-1.0), None);
        assert_eq!(Time(1500).to_string(), "1.500ms");
    }
}
