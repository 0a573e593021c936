//! Baseline reconstructors (convex hull, alpha shape, GPIS) and baseline touch policies.

mod delaunay;
mod gpis;
mod hull;
mod policy;

pub use delaunay::{alpha_from, alpha_shape, AlphaShape, Delaunay};
pub use gpis::{gpis_fit, gpis_predict, gpis_surface, GpisConfig, GpisModel};
pub use hull::convex_hull;
pub use policy::{gpis_occupancy, gpis_policy, random_policy, random_target, FirstTouch};
