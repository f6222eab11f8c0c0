//! Frozen calibration constants.
//!
//! Each value was produced by `popcd calibrate <target>` with the default
//! seed (0) and trial counts (see the README) and is what the acceptance
//! suite asserts against. The suite itself runs on other seeds.

/// Phase-clock modulus used by default everywhere.
pub const PHASE_CLOCK_M: u16 = 16;

/// Epoch cap of the standalone phase-clock checks.
pub const PHASE_CLOCK_F: u32 = 200;

/// All-agents window, in units of `n ln n`, that every epoch must reach when
/// choosing the modulus.
pub const PHASE_CLOCK_D1: f64 = 1.0;

/// `epidemic-d`: a one-source epidemic reaches everybody within
/// `EPIDEMIC_D * n ln n` steps.
pub const EPIDEMIC_D: f64 = 3.5;

/// `phaseclock-m-d1-d2`: smallest modulus in {8, 16, 24, 32} passing the
/// window check.
pub const CLOCK_M: u16 = 16;

/// `phaseclock-m-d1-d2`: every epoch below the cap has an all-agents window
/// of at least `CLOCK_D1 * n ln n` steps.
pub const CLOCK_D1: f64 = 10.25;

/// `phaseclock-m-d1-d2`: no agent stays in one epoch below the cap for more
/// than `CLOCK_D2 * n ln n` steps.
pub const CLOCK_D2: f64 = 25.0;

/// `proliferation-c`: infectivity is gone within `PROLIFERATION_C * n ln n`
/// steps of an epoch becoming global.
pub const PROLIFERATION_C: f64 = 1.0;

/// `backup-c`: two equal ranks among many duplicates meet within
/// `BACKUP_C * n^{3/2}` steps.
pub const BACKUP_C: f64 = 0.75;

/// `detection-m`: phase-clock modulus at which one dedicated epoch detects a
/// colliding pair often enough.
pub const DETECTION_M: u16 = 96;

/// `countfin-cfin`: countdown factor of the geometric estimator.
pub const C_FIN: u32 = 32;
