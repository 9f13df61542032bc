use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::event_log::Prefix;
use crate::simulators::SimCase;

/// Whether the KPI is a profit to maximise or a cost to minimise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }

    /// Index of the best value; ties go to the lowest index.
    pub fn best_index(self, values: &[f64]) -> usize {
        let mut best = 0;
        for (i, v) in values.iter().enumerate().skip(1) {
            if self.better(*v, values[best]) {
                best = i;
            }
        }
        best
    }
}

/// Maps the prefix observed at decision point `k` (1-based) to an action index.
/// The simulated case is passed so that rule-based policies can use its
/// identity; learned policies ignore it.
pub trait Policy: Sync {
    fn act(&self, case: &SimCase, prefix: Prefix<'_>, k: usize) -> Result<usize>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(&self, case: &SimCase, prefix: Prefix<'_>, k: usize) -> Result<usize> {
        (**self).act(case, prefix, k)
    }
}
