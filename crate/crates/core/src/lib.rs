// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

pub mod duhamel;
pub mod error;
pub mod forcing;
pub mod quadrature;
pub mod kernels;
pub mod oseen_bounds;
pub mod picard;
pub mod rigid_motion;
pub mod weights;

pub use error::{Result, WakeError};
pub use nalgebra::{Matrix3, Vector3};
pub use rigid_motion::{FourierSeries3, RigidMotionSpec, RotationMatrix, RotationPath, WakeReport};
pub use weights::{FieldGrid, GridSpec, TensorField, WeightedField};
