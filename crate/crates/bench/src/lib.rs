//! Shared fixtures for the kernel benchmarks.

use weakhard::control::{augment_let, discretize, gain_at_ratio};
use weakhard::numerics::Matrix;
use weakhard::taskmodel::assign_rm_priorities;
use weakhard::{DelaySequence, PlantCT, PlantDT, Task, Time};

/// Deterministic dense `n × n` matrix with entries in `[-scale, scale]`.
pub fn dense(n: usize, scale: f64) -> Matrix {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let data = (0..n * n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            scale * (2.0 * (state >> 11) as f64 / (1u64 << 53) as f64 - 1.0)
        })
        .collect();
    Matrix::from_row_major(n, n, data).expect("finite entries")
}

pub fn furuta(period_ms: u64) -> PlantDT {
    discretize(&PlantCT::furuta(), Time::from_ms(period_ms)).expect("discretizes")
}

/// A moderate LQR gain for the Furuta plant at `period_ms`.
pub fn furuta_gain(period_ms: u64) -> Matrix {
    let (az, bz) = augment_let(&furuta(period_ms));
    gain_at_ratio(&az, &bz, &[1.0, 1.0, 0.0, 0.0], 1.0).expect("gain exists")
}

/// The shipped reference task set without the controller.
pub fn reference_tasks() -> Vec<Task> {
    let params = [(60, 6), (80, 3), (120, 5), (150, 16), (200, 37), (240, 44), (300, 20)];
    let tasks: Vec<Task> = params
        .iter()
        .enumerate()
        .map(|(i, &(t, c))| Task::hard(format!("t{}", i + 1), Time::from_ms(t), Time::from_ms(c)))
        .collect();
    assign_rm_priorities(&tasks)
}

pub fn delay_pattern(len: usize, max: usize) -> DelaySequence {
    DelaySequence::new((0..len).map(|i| 1 + (i * 7 + i / 3) % max).collect())
}
