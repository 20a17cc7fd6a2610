//! Ulam-Harris labels, marked trees, spines and skeletons.

mod label;
mod marked;
mod spine;
pub mod text;

pub use label::ParticleLabel;
pub use marked::{MarkedTree, MotionState, ParticleRecord, PathPoint};
pub use spine::{
    extract_skeleton, for_each_tuple, occupiable_at, spine_probability, SkeletonRealization,
    SpineAssignment,
};

#[cfg(test)]
pub(crate) use marked::fixtures as fixtures_for_tests;
