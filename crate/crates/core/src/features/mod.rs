//! Raw spatial inputs to the standardized segment feature table.

mod buffers;
mod grid;
mod interpolate;
mod normalize;
mod trajectory;

pub use buffers::{
    landuse_composition, landuse_table, poi_entropy, poi_entropy_all, Composition, LanduseCell, PoiEntropy, PoiRecord,
    SegmentIndex, LANDUSE_CLASSES,
};
pub use grid::{aggregate_grid, Grid, PopulationCell};
pub use interpolate::{interpolate_missing, interpolate_with_adjacency, Interpolated};
pub use normalize::{invert, invert_value, normalize, normalize_column};
pub use trajectory::{density_column_name, match_density, resample_trajectory, ExerciseDensity, Resampled, TrajectoryPoint};
