//! Volumetric cross-modality image synthesis at desk scale.
//!
//! The crate is organized around a small set of shared carriers ([`Volume`],
//! [`BinaryMask`], [`CasePair`]) and the pipeline stages that consume them:
//!
//! * [`volgrid`] — volumetric grids, geometry and NIfTI-1 I/O
//! * [`prep`] — deterministic preprocessing and stochastic augmentations
//! * [`regqc`] — registration quality control and a rigid NMI registrar
//! * [`phantom`] — seeded synthetic MRI/PET case generator
//! * [`tape`] — reverse-mode automatic differentiation on dense f64 tensors
//! * [`net`] — volumetric generator/discriminator pair and checkpointing
//! * [`objective`] — adversarial, reconstruction and tumor-focus losses
//! * [`train`] — dataset assembly, schedules and the training loop
//! * [`eval`] — whole-brain and tumor-bounding-box PSNR/SSIM reports

pub mod error;
pub mod eval;
pub mod net;
pub mod objective;
pub mod phantom;
pub mod prep;
pub mod regqc;
pub mod rng;
pub mod tape;
pub mod train;
pub mod volgrid;

pub use error::{Error, Result};
pub use volgrid::{BinaryMask, CasePair, DynamicSeries, Tracer, Volume};
