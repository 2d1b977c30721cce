//! Independent reference implementations shared by the integration and
//! acceptance tests. None of these call into the code under test beyond
//! plain data types.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weakhard::numerics::Matrix;
use weakhard::{Task, Time};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_row_major(rows, cols, data).unwrap()
}

// ---- double-double arithmetic -------------------------------------------

#[derive(Clone, Copy, Debug, Default)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    pub fn new(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn div_f64(self, d: f64) -> Dd {
        let q = self.hi / d;
        // One correction step: r = self − q·d.
        let r = self.add(Dd::new(q).mul(Dd::new(-d)));
        let (hi, lo) = two_sum(q, r.to_f64() / d);
        Dd { hi, lo }
    }
}

type DdMat = Vec<Vec<Dd>>;

fn dd_matmul(a: &DdMat, b: &DdMat) -> DdMat {
    let n = a.len();
    let mut c = vec![vec![Dd::default(); n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i][j] = c[i][j].add(a[i][k].mul(b[k][j]));
            }
        }
    }
    c
}

/// Matrix exponential by a plain Taylor series in double-double precision,
/// with power-of-two scaling so the series converges quickly.
pub fn expm_series(m: &Matrix) -> Matrix {
    let n = m.rows();
    let norm = m.norm_1();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let s = 2f64.powi(-squarings);
    let a: DdMat = (0..n)
        .map(|i| (0..n).map(|j| Dd::new(m[(i, j)] * s)).collect())
        .collect();
    let mut sum: DdMat = (0..n)
        .map(|i| (0..n).map(|j| Dd::new(if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    let mut term = sum.clone();
    for k in 1..40 {
        term = dd_matmul(&term, &a);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v = v.div_f64(k as f64);
            }
        }
        for i in 0..n {
            for j in 0..n {
                sum[i][j] = sum[i][j].add(term[i][j]);
            }
        }
    }
    for _ in 0..squarings {
        sum = dd_matmul(&sum, &sum);
    }
    let data = sum.iter().flatten().map(|v| v.to_f64()).collect();
    Matrix::from_row_major(n, n, data).unwrap()
}

// ---- scheduling ------------------------------------------------------------

/// Finish time and miss flag of one job, keyed by priority rank and index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct OracleJob {
    pub rank: usize,
    pub index: u64,
    pub finish_us: u64,
    pub missed: bool,
}

/// Microsecond-by-microsecond fixed-priority preemptive simulation.
/// `tasks` must be sorted by priority (highest first). Releases continue
/// forever; the result lists every job released in `[0, horizon)`, run to
/// completion.
pub fn brute_force_schedule(tasks: &[Task], horizon_us: u64) -> Vec<OracleJob> {
    struct Pending {
        index: u64,
        release: u64,
        left: u64,
    }
    let mut queues: Vec<std::collections::VecDeque<Pending>> =
        tasks.iter().map(|_| Default::default()).collect();
    let mut released = vec![0u64; tasks.len()];
    let mut done = Vec::new();
    let mut t = 0u64;
    loop {
        let outstanding = queues
            .iter()
            .any(|q| q.iter().any(|p| p.release < horizon_us));
        if t >= horizon_us && !outstanding {
            break;
        }
        for (r, task) in tasks.iter().enumerate() {
            if t.is_multiple_of(task.period.as_us()) {
                queues[r].push_back(Pending {
                    index: released[r],
                    release: t,
                    left: task.wcet.as_us(),
                });
                released[r] += 1;
            }
        }
        if let Some(r) = queues.iter().position(|q| !q.is_empty()) {
            let job = queues[r].front_mut().unwrap();
            job.left -= 1;
            if job.left == 0 {
                let job = queues[r].pop_front().unwrap();
                let finish = t + 1;
                if job.release < horizon_us {
                    done.push(OracleJob {
                        rank: r,
                        index: job.index,
                        finish_us: finish,
                        missed: finish > job.release + tasks[r].deadline.as_us(),
                    });
                }
            }
        }
        t += 1;
    }
    done.sort();
    done
}

pub const PERIODS_MS: [u64; 8] = [2, 3, 4, 5, 6, 8, 10, 12];

/// Up to five tasks with integer-ms parameters and utilization at most
/// `max_u`. Priorities follow the (shuffled) generation order.
pub fn random_task_set(r: &mut impl Rng, max_u: f64) -> Vec<Task> {
    loop {
        let n = r.random_range(1..=5);
        let tasks: Vec<Task> = (0..n)
            .map(|i| {
                let t = PERIODS_MS[r.random_range(0..PERIODS_MS.len())];
                let c = r.random_range(1..=t.div_ceil(2));
                Task::hard(format!("t{i}"), Time::from_ms(t), Time::from_ms(c))
                    .with_priority(i as u32 + 1)
            })
            .collect();
        let u: f64 = tasks.iter().map(Task::utilization).sum();
        if u <= max_u {
            return tasks;
        }
    }
}

/// Classic response-time analysis; `None` if the fixed point exceeds the deadline.
pub fn rta(tasks: &[Task], rank: usize) -> Option<Time> {
    let c = tasks[rank].wcet.as_us();
    let mut r = c;
    loop {
        let next = c + tasks[..rank]
            .iter()
            .map(|h| r.div_ceil(h.period.as_us()) * h.wcet.as_us())
            .sum::<u64>();
        if next > tasks[rank].deadline.as_us() {
            return None;
        }
        if next == r {
            return Some(Time::from_us(r));
        }
        r = next;
    }
}

// ---- weakly-hard mining ---------------------------------------------------

/// Largest miss count in any `k` consecutive jobs of the periodic pattern,
/// by explicit windows over enough concatenated copies.
pub fn brute_force_mk(bits: &[bool], k: usize) -> usize {
    let n = bits.len();
    if n == 0 {
        return 0;
    }
    let copies = k.div_ceil(n) + 1;
    let long: Vec<bool> = bits.iter().copied().cycle().take(n * copies).collect();
    (0..n)
        .map(|s| long[s..s + k].iter().filter(|&&b| b).count())
        .max()
        .unwrap()
}

// ---- closed loop ------------------------------------------------------------

/// Plain state-space iteration of the sampled LET loop with per-step input
/// delays: `x ← A x + B u[k−p_k]`, `u[k] = −F [x; u[k−1]]`.
pub fn iterate_delayed_loop(
    a: &Matrix,
    b: &Matrix,
    f: &Matrix,
    delays: &[usize],
    phase: usize,
    x0: &[f64],
    steps: usize,
) -> Vec<Vec<f64>> {
    let (n, m) = (a.rows(), b.cols());
    let mut xs = vec![x0.to_vec()];
    let mut cmds: Vec<Vec<f64>> = Vec::new();
    let cmd = |k: isize, cmds: &Vec<Vec<f64>>| -> Vec<f64> {
        if k < 0 {
            vec![0.0; m]
        } else {
            cmds[k as usize].clone()
        }
    };
    for k in 0..steps {
        let x = xs[k].clone();
        let mut z = x.clone();
        z.extend(cmd(k as isize - 1, &cmds));
        let u: Vec<f64> = (0..m)
            .map(|r| -(0..n + m).map(|c| f[(r, c)] * z[c]).sum::<f64>())
            .collect();
        cmds.push(u);
        let p = delays[(phase + k) % delays.len()];
        let applied = cmd(k as isize - p as isize, &cmds);
        let next: Vec<f64> = (0..n)
            .map(|i| {
                (0..n).map(|j| a[(i, j)] * x[j]).sum::<f64>()
                    + (0..m).map(|j| b[(i, j)] * applied[j]).sum::<f64>()
            })
            .collect();
        xs.push(next);
    }
    xs
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
