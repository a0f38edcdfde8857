//! Small solvers backing the sensitivity bounds: a dense simplex for the
//! per-set linear programs and a multi-start projected gradient method for
//! smooth objectives over the unit box.

pub mod boxopt;
pub mod simplex;

pub use boxopt::{box_optimize, finite_difference_gradient, BoxObjective, BoxOptions, BoxSolution, Sense};
pub use simplex::{simplex_solve, Constraint, LinearProgram, LpSolution, Relation, SimplexOptions};
