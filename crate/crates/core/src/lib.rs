//! Numerical analysis of tangentially degenerate submanifolds of affine space.
//!
//! The pipeline goes from an expression-tree parametrization to second-order
//! jets, the Gauss-map rank and its leaves, the leaf matrices `C_i` and
//! second fundamental forms `B^α`, the pencil of second forms, the focal
//! polynomial of a leaf with its hyperplane decomposition, and finally a
//! cylinder / cone verdict with the recovered generators or vertex.
//!
//! All scalars are `Complex64`; real inputs embed with zero imaginary part.

pub mod classify;
pub mod corpus;
pub mod error;
pub mod expr;
pub mod focal;
pub mod frames;
pub mod gauss;
pub mod jet;
pub mod linalg;
pub mod par;
pub mod pencil;
pub mod poly;
pub mod report;
pub mod ruled;
pub mod serde_mat;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;

/// Dense complex matrix used throughout the crate.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;

pub use classify::{classify, Classification, ClassifyConfig, Verdict};
pub use expr::{Expr, ExprMap};
pub use frames::{extract_leaf_data, LeafData};
pub use gauss::{gauss_rank, rank_profile, second_forms, tangent_frame, RankTolerance};
pub use jet::{eval_jet2, finite_diff_jet2, FdSteps, Jet2};
pub use par::ExecMode;
pub use ruled::RuledSpec;
