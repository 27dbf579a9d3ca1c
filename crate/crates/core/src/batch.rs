//! Independent scenario runs, data-parallel with the `parallel` feature and
//! sequential otherwise. Results keep input order either way.

use crate::error::Result;
use crate::sim::{run_scenario, Scenario, Trace};

/// Applies `f` to every item, on the rayon pool when `parallel` is enabled.
pub fn map_batch<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

pub fn run_batch(scenarios: &[Scenario]) -> Vec<Result<Trace>> {
    map_batch(scenarios, run_scenario)
}

pub fn run_batch_sequential(scenarios: &[Scenario]) -> Vec<Result<Trace>> {
    scenarios.iter().map(run_scenario).collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
