//! Fibered rotation numbers of one-parameter circle cocycle families.

pub mod analysis;
pub mod circle_maps;
pub mod drivers;
pub mod error;
pub mod measures;
pub mod rotation;
pub mod schrodinger;
pub mod stats;

pub use circle_maps::{
    calibrate_lifts, compose, morse_smale, projectivize, FiberFamily, LiftCalibration,
    LiftedCircleMap, MapFamily, Sl2Matrix,
};
pub use drivers::{Base, IidDriver, Law, PeriodicBase, RotationBase, TrigPolynomial};
pub use error::{Error, Result};
pub use measures::{kolmogorov_distance, phi_measures, EmpiricalCircleMeasure, MeasureOnLine};
pub use rotation::{CocycleFamily, Estimate, InvariantMeasureField, RotationEstimate};
pub use schrodinger::{IdsCurve, PotentialSpec, SchrodingerCocycle};
pub use analysis::{example53_run, holder_fit, Example53Config, HolderFit};
