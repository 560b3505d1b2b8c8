/// Step-indexed resolution ladder for coarse-to-fine RGB rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(try_from = "alloc::vec::Vec<(usize, usize)>", into = "alloc::vec::Vec<(usize, usize)>")
)]
pub struct ResolutionSchedule {
    /// `(first step, square resolution)` rungs, sorted by step.
    rungs: alloc::vec::Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("schedule needs at least one rung starting at step 0")]
    MissingStart,
    #[error("rung steps must increase and resolutions must not shrink")]
    NotMonotone,
}

impl Default for ResolutionSchedule {
    /// 32 → 64 → 128 → 256 → 512, a new rung every 30 steps.
    fn default() -> Self {
        Self::ladder(32, 512, 30)
    }
}

impl ResolutionSchedule {
    pub fn new(rungs: alloc::vec::Vec<(usize, usize)>) -> Result<Self, ScheduleError> {
        if rungs.first().map(|r| r.0) != Some(0) {
            return Err(ScheduleError::MissingStart);
        }
        if rungs.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 < w[0].1) {
            return Err(ScheduleError::NotMonotone);
        }
        Ok(Self { rungs })
    }

    /// Doubling ladder from `start` to `top`, advancing every `every` steps.
    pub fn ladder(start: usize, top: usize, every: usize) -> Self {
        let mut rungs = alloc::vec::Vec::new();
        let mut res = start.max(1);
        let mut step = 0;
        loop {
            rungs.push((step, res.min(top)));
            if res >= top {
                break;
            }
            res *= 2;
            step += every.max(1);
        }
        Self { rungs }
    }

    /// Constant resolution.
    pub fn fixed(resolution: usize) -> Self {
        Self {
            rungs: alloc::vec![(0, resolution)],
        }
    }

    pub fn rungs(&self) -> &[(usize, usize)] {
        &self.rungs
    }

    pub fn resolution_at(&self, step: usize) -> usize {
        self.rungs
            .iter()
            .take_while(|(s, _)| *s <= step)
            .last()
            .map(|r| r.1)
            .unwrap_or(self.rungs[0].1)
    }

    pub fn top(&self) -> usize {
        self.rungs.last().map(|r| r.1).unwrap_or(0)
    }
}

impl TryFrom<alloc::vec::Vec<(usize, usize)>> for ResolutionSchedule {
    type Error = ScheduleError;

    fn try_from(rungs: alloc::vec::Vec<(usize, usize)>) -> Result<Self, ScheduleError> {
        Self::new(rungs)
    }
}

impl From<ResolutionSchedule> for alloc::vec::Vec<(usize, usize)> {
    fn from(s: ResolutionSchedule) -> Self {
        s.rungs
    }
}

/// Resolution of the RGB render at `step` under the default ladder.
pub fn hierarchical_schedule(step: usize) -> usize {
    ResolutionSchedule::default().resolution_at(step)
}
