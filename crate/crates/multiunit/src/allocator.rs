//! The randomized online allocation state machine.
//!
//! Copies of an item arrive one at a time with no advance notice of how many
//! will come. The machine allocates greedily until the revenue curve's current
//! peak `b_i` is reached, then waits (discards copies) for a randomly chosen
//! budget before pushing on toward the next peak.
//!
//! The wait budget `T` is a continuous uniform draw coupled across phases so
//! that it only ever increases: entering the wait after peak `i`, with
//! probability `D_{i-1}/D_i` the old budget is kept (in which case the
//! discards already made cover it and allocation resumes immediately), and
//! otherwise `T` is redrawn uniformly from `(D_{i-1}, D_i]`. The marginal law
//! of `T` in phase `i` is uniform on `[0, D_i]`, and the number of copies
//! discarded up to phase `i` is `ceil(T_i)`.
//!
//! Draw order per resample: first the keep/replace coin, then (only on
//! replace) the uniform position. When `D_i = D_{i-1}` nothing is drawn.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::{find_critical_points, CriticalPoints, RevenueCurve};
use crate::rng::derive_rng;

/// What the machine is doing between copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Allocate,
    Wait,
    Halt,
}

/// Per-copy decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allocated,
    Discarded,
    Halted,
}

/// The online state machine. Single-owner; step it once per produced copy.
#[derive(Debug, Clone)]
pub struct AllocatorState {
    cps: CriticalPoints,
    /// 1-based index of the peak currently being worked toward.
    phase: usize,
    mode: Mode,
    /// Copies allocated so far.
    x: usize,
    /// Copies discarded so far.
    y: usize,
    /// Total wait budget; discards stop once `y >= t`. Non-decreasing.
    t: f64,
    /// Realized `ceil(T_i)` per resample, in phase order.
    waits: Vec<usize>,
    rng: ChaCha8Rng,
}

impl AllocatorState {
    pub fn new(cps: CriticalPoints, seed: u64) -> Self {
        Self {
            cps,
            phase: 1,
            mode: Mode::Allocate,
            x: 0,
            y: 0,
            t: 0.0,
            waits: Vec::new(),
            rng: derive_rng(seed, "allocator"),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn allocated(&self) -> usize {
        self.x
    }

    pub fn discarded(&self) -> usize {
        self.y
    }

    pub fn wait_budget(&self) -> f64 {
        self.t
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    /// Realized cumulative wait values `ceil(T_i)` for each phase resampled so far.
    pub fn waits(&self) -> &[usize] {
        &self.waits
    }

    /// Consumes one produced copy.
    pub fn step(&mut self) -> Decision {
        match self.mode {
            Mode::Halt => Decision::Halted,
            Mode::Allocate => {
                self.x += 1;
                if self.x == self.cps.b(self.phase) {
                    if self.phase == self.cps.num_peaks() {
                        self.mode = Mode::Halt;
                    } else {
                        let d_prev = self.cps.d(self.phase - 1);
                        let d_cur = self.cps.d(self.phase);
                        self.resample_wait_budget(d_prev, d_cur)
                            .expect("wait bounds are non-decreasing by construction");
                        self.phase += 1;
                        if (self.y as f64) < self.t {
                            self.mode = Mode::Wait;
                        }
                        // Otherwise the budget is already covered by past
                        // discards and allocation continues without waiting.
                    }
                }
                Decision::Allocated
            }
            Mode::Wait => {
                self.y += 1;
                if self.y as f64 >= self.t {
                    self.mode = Mode::Allocate;
                }
                Decision::Discarded
            }
        }
    }

    /// Coupled resample keeping `T` uniform on `[0, D_cur]`: keep with
    /// probability `D_prev/D_cur`, otherwise redraw from `(D_prev, D_cur]`.
    pub fn resample_wait_budget(&mut self, d_prev: usize, d_cur: usize) -> Result<f64> {
        if d_prev > d_cur {
            return Err(Error::InvariantViolation(format!(
                "wait bounds must be non-decreasing, got {d_prev} -> {d_cur}"
            )));
        }
        if d_cur > d_prev {
            let keep: f64 = self.rng.gen();
            if keep >= d_prev as f64 / d_cur as f64 {
                // Sampling T = d_cur - u * (d_cur - d_prev) with u in [0, 1)
                // lands in (d_prev, d_cur], so ceil(T) is uniform on
                // {d_prev+1, ..., d_cur}.
                let u: f64 = self.rng.gen();
                let new_t = d_cur as f64 - u * (d_cur - d_prev) as f64;
                debug_assert!(new_t >= self.t);
                self.t = new_t;
            }
        }
        self.waits.push(self.t.ceil() as usize);
        Ok(self.t)
    }
}

/// Result of feeding a whole supply through the machine.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub x_final: usize,
    /// `f(x_final)` on the curve the run was driven by.
    pub revenue: f64,
    /// Per-copy decisions, when requested.
    pub trace: Option<Vec<Decision>>,
    /// Realized cumulative wait values `ceil(T_i)`, one per resampled phase.
    pub waits: Vec<usize>,
}

/// Feeds `supply` copies through a fresh allocator on `curve`.
pub fn run(curve: &RevenueCurve, supply: usize, seed: u64) -> RunOutcome {
    run_inner(curve, supply, seed, false)
}

/// Same as [`run`] but records the per-copy decision trace.
pub fn run_with_trace(curve: &RevenueCurve, supply: usize, seed: u64) -> RunOutcome {
    run_inner(curve, supply, seed, true)
}

fn run_inner(curve: &RevenueCurve, supply: usize, seed: u64, want_trace: bool) -> RunOutcome {
    let cps = find_critical_points(curve);
    let mut state = AllocatorState::new(cps, seed);
    let mut trace = want_trace.then(|| Vec::with_capacity(supply));
    for _ in 0..supply {
        let d = state.step();
        if let Some(t) = trace.as_mut() {
            t.push(d);
        }
    }
    RunOutcome {
        x_final: state.x,
        revenue: curve.f(state.x),
        trace,
        waits: state.waits,
    }
}

/// Runs the identical machinery on an arbitrary tabulated sublinear objective.
pub fn run_generic(f_table: &[f64], supply: usize, seed: u64) -> Result<RunOutcome> {
    let curve = RevenueCurve::from_table(f_table)?;
    Ok(run(&curve, supply, seed))
}
