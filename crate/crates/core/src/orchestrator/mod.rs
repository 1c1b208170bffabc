//! Per-slot block loop, episodes, baselines, sweeps and output.

pub mod episode;
pub mod report;
pub mod slot;
pub mod sweep;

pub use episode::{run_episode, EpisodeLog, EpisodeOptions, Metrics};
pub use slot::{jmstp_slot, validate_slot, Algorithm, SlotOptions, SlotRun, SlotSolution, Stage, StageRecord, WarmStart};
pub use sweep::{sweep, Axis, SweepResult, SweepRow, SweepRun};

/// Random-allocation baseline episode.
pub fn baseline_random(s: &crate::Scenario, opts: EpisodeOptions) -> crate::Result<EpisodeLog> {
    run_episode(s, Algorithm::RandomAllocation, opts)
}

/// Cellular-only baseline episode.
pub fn baseline_cellular(s: &crate::Scenario, opts: EpisodeOptions) -> crate::Result<EpisodeLog> {
    run_episode(s, Algorithm::CellularOnly, opts)
}
