use std::collections::VecDeque;

use rand::Rng;

use crate::envs::Transition;
use crate::error::{Error, Result};

/// FIFO replay of whole trajectories, bounded by a total step count.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    capacity: usize,
    trajectories: VecDeque<Vec<Transition>>,
    total_steps: usize,
    // cumulative step counts, `ends[i]` = steps in trajectories[..=i]
    ends: Vec<usize>,
}

/// A contiguous run of transitions from one stored trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryWindow<'a> {
    pub transitions: &'a [Transition],
    /// Whether the window runs up to the last stored transition of its trajectory.
    pub at_trajectory_end: bool,
}

impl<'a> TrajectoryWindow<'a> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Domain("replay capacity must be positive".into()));
        }
        Ok(Self { capacity, ..Self::default() })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total_steps == 0
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &[Transition]> {
        self.trajectories.iter().map(Vec::as_slice)
    }

    /// Store a trajectory, evicting the oldest ones until the step budget holds.
    pub fn append(&mut self, trajectory: Vec<Transition>) -> Result<()> {
        if trajectory.is_empty() {
            return Err(Error::Empty("trajectory"));
        }
        if trajectory.len() > self.capacity {
            return Err(Error::Domain(format!(
                "trajectory of {} steps exceeds replay capacity {}",
                trajectory.len(),
                self.capacity
            )));
        }
        if let Some(t) = trajectory.iter().find(|t| !t.behavior_log_prob.is_finite() || !t.reward.is_finite()) {
            return Err(Error::Numeric(format!(
                "transition with behavior log-prob {} and reward {}",
                t.behavior_log_prob, t.reward
            )));
        }
        self.total_steps += trajectory.len();
        self.trajectories.push_back(trajectory);
        while self.total_steps > self.capacity {
            let old = self.trajectories.pop_front().expect("non-empty while over capacity");
            self.total_steps -= old.len();
        }
        self.ends.clear();
        let mut acc = 0;
        for t in &self.trajectories {
            acc += t.len();
            self.ends.push(acc);
        }
        Ok(())
    }

    /// The transition with global index `i` (oldest first) as `(trajectory, offset)`.
    fn locate(&self, i: usize) -> (usize, usize) {
        let traj = self.ends.partition_point(|&end| end <= i);
        let start = if traj == 0 { 0 } else { self.ends[traj - 1] };
        (traj, i - start)
    }

    /// `n` windows of up to `len` steps, each starting at a transition drawn
    /// uniformly from the whole buffer and cut short at trajectory ends.
    pub fn sample_windows<R: Rng + ?Sized>(&self, n: usize, len: usize, rng: &mut R) -> Result<Vec<TrajectoryWindow<'_>>> {
        if self.is_empty() {
            return Err(Error::Empty("replay buffer"));
        }
        if len == 0 {
            return Err(Error::Domain("window length must be positive".into()));
        }
        Ok((0..n)
            .map(|_| {
                let (traj, offset) = self.locate(rng.gen_range(0..self.total_steps));
                let stored = &self.trajectories[traj];
                let end = (offset + len).min(stored.len());
                TrajectoryWindow { transitions: &stored[offset..end], at_trajectory_end: end == stored.len() }
            })
            .collect())
    }
}
