//! Delay-Doppler (OTFS) link-level simulation.
//!
//! The crate covers the full transmit/receive chain of a reduced-CP OTFS
//! system with two pilot designs:
//!
//! * a superimposed pilot (`Scheme::S1d`): a Chu sequence with its own cyclic
//!   prefix occupying one delay column, overlapped with data, and
//! * an embedded pilot (`Scheme::Ep`): a single pilot cell protected by a
//!   guard rectangle.
//!
//! Channel estimation is a sparse recovery problem solved with orthogonal
//! matching pursuit over a sensing matrix built from the pilot grid.
//! Detection uses LMMSE or an iterative maximal-ratio-combining detector,
//! optionally alternating estimation and interference cancellation.
//!
//! Module map:
//!
//! | module      | contents                                                  |
//! |-------------|-----------------------------------------------------------|
//! | `numerics`  | `DdGrid`, column-major `vec`/`unvec`, Gray-coded QAM      |
//! | `zak`       | `FrameConfig`, IDZT/DZT, cyclic prefix                    |
//! | `channel`   | sparse DD channel draws, time/DD/matrix channel routes    |
//! | `pilot`     | Chu sequences, S1D/EP frame construction, validation      |
//! | `estimator` | DD index map, sensing matrices, OMP, NMSE                 |
//! | `equalizer` | pilot/data cancellation, LMMSE, MRC, iterative receiver   |
//! | `metrics`   | PAPR, BER, spectral efficiency, per-trial records         |
//! | `sim`       | seeded Monte Carlo trials, sweeps, CSV/JSON export        |

pub mod channel;
pub mod equalizer;
pub mod error;
pub mod estimator;
pub mod metrics;
pub mod numerics;
pub mod pilot;
pub mod sim;
pub mod zak;

pub use error::{Error, Result};
pub use numerics::{DdGrid, QamConstellation, C64};
pub use pilot::Scheme;
pub use zak::{FrameConfig, TimeSignal};
