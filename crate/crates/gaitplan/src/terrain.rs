//! Elevation maps and procedural terrain.
//!
//! A [`HeightMap`] is a uniform grid of cell elevations with piecewise-constant
//! (nearest-cell) lookup semantics: every query inside the footprint reads the
//! elevation of the cell whose center is nearest. Queries outside the footprint
//! are a hard error so harness bugs surface immediately instead of reading
//! phantom ground.
//!
//! Scenario generators produce maps deterministically from a seed: an identical
//! [`TerrainScenario`] always yields a bit-identical grid.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Side length, in samples, of the robocentric elevation window.
pub const LOCAL_GRID_DIM: usize = 32;
/// Sample pitch of the robocentric elevation window, meters.
pub const LOCAL_GRID_RES_M: f64 = 0.04;

/// Robocentric elevation window: `grid[i][j]` holds terrain elevation minus
/// base height at base-frame offset `x = (i - 15.5) * 0.04`, `y = (j - 15.5) * 0.04`.
pub type LocalGrid = [[f64; LOCAL_GRID_DIM]; LOCAL_GRID_DIM];

/// Returned by [`HeightMap::min_edge_distance`] when no qualifying edge exists
/// inside the search radius.
pub const NO_EDGE: f64 = f64::INFINITY;

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error(
        "query ({x:.3}, {y:.3}) is outside the map footprint \
         x [{min_x:.3}, {max_x:.3}] y [{min_y:.3}, {max_y:.3}]"
    )]
    OutOfFootprint {
        x: f64,
        y: f64,
        min_x: f64,
        max_x: f64,
        min_y: f64,
        max_y: f64,
    },
    #[error("invalid height map: {0}")]
    InvalidMap(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(
        "features exceed the requested map footprint: need {needed:.3} m of length, have {available:.3} m"
    )]
    FeaturesExceedFootprint { needed: f64, available: f64 },
    #[error(
        "{name} region x [{min_x:.3}, {max_x:.3}] y [{min_y:.3}, {max_y:.3}] \
         is not inside the map footprint"
    )]
    RegionOutsideFootprint {
        name: &'static str,
        min_x: f64,
        max_x: f64,
        min_y: f64,
        max_y: f64,
    },
}

/// Axis-aligned planar rectangle, used for spawn and goal regions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Rect { min, max }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    /// Uniform sample; degenerate extents collapse to the fixed coordinate.
    pub fn sample(&self, rng: &mut impl Rng) -> [f64; 2] {
        let mut draw = |lo: f64, hi: f64| {
            if hi > lo {
                lo + (hi - lo) * rng.gen::<f64>()
            } else {
                lo
            }
        };
        [
            draw(self.min[0], self.max[0]),
            draw(self.min[1], self.max[1]),
        ]
    }

    fn is_valid(&self) -> bool {
        self.min[0] <= self.max[0]
            && self.min[1] <= self.max[1]
            && self.min.iter().chain(self.max.iter()).all(|v| v.is_finite())
    }
}

/// Uniform-grid elevation map. Row-major storage; cell `(row, col)` center sits
/// at `origin_xy + (col * resolution, row * resolution)`; rows advance along +y.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightMap {
    origin_xy: [f64; 2],
    resolution: f64,
    n_rows: usize,
    n_cols: usize,
    elevations: Vec<f64>,
}

impl HeightMap {
    pub fn new(
        origin_xy: [f64; 2],
        resolution: f64,
        n_rows: usize,
        n_cols: usize,
        elevations: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(TerrainError::InvalidMap(format!(
                "resolution must be finite and > 0, got {resolution}"
            )));
        }
        if n_rows == 0 || n_cols == 0 {
            return Err(TerrainError::InvalidMap(format!(
                "grid must be non-empty, got {n_rows} rows x {n_cols} cols"
            )));
        }
        if elevations.len() != n_rows * n_cols {
            return Err(TerrainError::InvalidMap(format!(
                "elevations holds {} samples, expected n_rows * n_cols = {}",
                elevations.len(),
                n_rows * n_cols
            )));
        }
        if !origin_xy.iter().all(|v| v.is_finite()) {
            return Err(TerrainError::InvalidMap(format!(
                "origin_xy must be finite, got ({}, {})",
                origin_xy[0], origin_xy[1]
            )));
        }
        if let Some(i) = elevations.iter().position(|v| !v.is_finite()) {
            return Err(TerrainError::InvalidMap(format!(
                "elevations[{i}] is not finite"
            )));
        }
        Ok(HeightMap {
            origin_xy,
            resolution,
            n_rows,
            n_cols,
            elevations,
        })
    }

    pub fn origin_xy(&self) -> [f64; 2] {
        self.origin_xy
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    pub fn cell(&self, row: usize, col: usize) -> f64 {
        self.elevations[row * self.n_cols + col]
    }

    /// Footprint corners `(min, max)`: cell areas extend half a resolution
    /// beyond the outermost cell centers.
    pub fn footprint(&self) -> ([f64; 2], [f64; 2]) {
        let h = 0.5 * self.resolution;
        (
            [self.origin_xy[0] - h, self.origin_xy[1] - h],
            [
                self.origin_xy[0] + (self.n_cols as f64 - 1.0) * self.resolution + h,
                self.origin_xy[1] + (self.n_rows as f64 - 1.0) * self.resolution + h,
            ],
        )
    }

    pub fn contains(&self, xy: [f64; 2]) -> bool {
        let (lo, hi) = self.footprint();
        xy[0] >= lo[0] && xy[0] <= hi[0] && xy[1] >= lo[1] && xy[1] <= hi[1]
    }

    fn out_of_footprint(&self, xy: [f64; 2]) -> TerrainError {
        let (lo, hi) = self.footprint();
        TerrainError::OutOfFootprint {
            x: xy[0],
            y: xy[1],
            min_x: lo[0],
            max_x: hi[0],
            min_y: lo[1],
            max_y: hi[1],
        }
    }

    fn cell_of(&self, xy: [f64; 2]) -> Option<(usize, usize)> {
        if !self.contains(xy) {
            return None;
        }
        let col = ((xy[0] - self.origin_xy[0]) / self.resolution).round() as i64;
        let row = ((xy[1] - self.origin_xy[1]) / self.resolution).round() as i64;
        // contains() admits the footprint rim, whose rounding stays in range;
        // clamp guards the exact boundary against rounding up.
        let col = col.clamp(0, self.n_cols as i64 - 1) as usize;
        let row = row.clamp(0, self.n_rows as i64 - 1) as usize;
        Some((row, col))
    }

    /// Nearest-cell elevation lookup. Out-of-footprint queries are an error.
    pub fn elevation_at(&self, xy: [f64; 2]) -> Result<f64, TerrainError> {
        let (row, col) = self.cell_of(xy).ok_or_else(|| self.out_of_footprint(xy))?;
        Ok(self.cell(row, col))
    }

    /// Planar distance from `xy` to the nearest boundary between adjacent cells
    /// whose elevation difference exceeds `height_threshold`, searched within
    /// `search_radius`. Returns [`NO_EDGE`] (+inf) when no such boundary exists
    /// in range.
    pub fn min_edge_distance(
        &self,
        xy: [f64; 2],
        height_threshold: f64,
        search_radius: f64,
    ) -> Result<f64, TerrainError> {
        if !self.contains(xy) {
            return Err(self.out_of_footprint(xy));
        }
        let res = self.resolution;
        // Cells whose shared boundaries could fall inside the radius.
        let col_lo = (((xy[0] - search_radius - self.origin_xy[0]) / res).floor() as i64).max(0);
        let col_hi = (((xy[0] + search_radius - self.origin_xy[0]) / res).ceil() as i64)
            .min(self.n_cols as i64 - 1);
        let row_lo = (((xy[1] - search_radius - self.origin_xy[1]) / res).floor() as i64).max(0);
        let row_hi = (((xy[1] + search_radius - self.origin_xy[1]) / res).ceil() as i64)
            .min(self.n_rows as i64 - 1);

        let mut best = NO_EDGE;
        for row in row_lo..=row_hi {
            for col in col_lo..=col_hi {
                let (r, c) = (row as usize, col as usize);
                let here = self.cell(r, c);
                // Boundary with the +x neighbor: vertical segment.
                if c + 1 < self.n_cols && (self.cell(r, c + 1) - here).abs() > height_threshold {
                    let bx = self.origin_xy[0] + (c as f64 + 0.5) * res;
                    let y0 = self.origin_xy[1] + (r as f64 - 0.5) * res;
                    let d = point_segment_distance(xy, [bx, y0], [bx, y0 + res]);
                    best = best.min(d);
                }
                // Boundary with the +y neighbor: horizontal segment.
                if r + 1 < self.n_rows && (self.cell(r + 1, c) - here).abs() > height_threshold {
                    let by = self.origin_xy[1] + (r as f64 + 0.5) * res;
                    let x0 = self.origin_xy[0] + (c as f64 - 0.5) * res;
                    let d = point_segment_distance(xy, [x0, by], [x0 + res, by]);
                    best = best.min(d);
                }
            }
        }
        if best > search_radius {
            return Ok(NO_EDGE);
        }
        Ok(best)
    }

    /// Robocentric window: 32x32 samples at 4 cm pitch, yaw-aligned and centered
    /// on `base_xy`; values are terrain elevation minus `base_z`. Errors if any
    /// sample point leaves the footprint.
    pub fn local_heightmap(
        &self,
        base_xy: [f64; 2],
        base_yaw: f64,
        base_z: f64,
    ) -> Result<LocalGrid, TerrainError> {
        let (s, c) = base_yaw.sin_cos();
        let mut grid = [[0.0; LOCAL_GRID_DIM]; LOCAL_GRID_DIM];
        let half = (LOCAL_GRID_DIM as f64 - 1.0) / 2.0;
        for (i, row) in grid.iter_mut().enumerate() {
            let xb = (i as f64 - half) * LOCAL_GRID_RES_M;
            for (j, v) in row.iter_mut().enumerate() {
                let yb = (j as f64 - half) * LOCAL_GRID_RES_M;
                let wx = base_xy[0] + c * xb - s * yb;
                let wy = base_xy[1] + s * xb + c * yb;
                *v = self.elevation_at([wx, wy])? - base_z;
            }
        }
        Ok(grid)
    }
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = ap[0] - t * ab[0];
    let dy = ap[1] - t * ab[1];
    (dx * dx + dy * dy).sqrt()
}

/// One building block of a [`ScenarioParams::Composite`] lane, laid along +x.
#[derive(Clone, Debug, PartialEq)]
pub enum Feature {
    /// Level ground at the current elevation.
    Flat { length: f64 },
    /// Trench across the lane: `width` along x, floor `depth` below the
    /// current elevation; ground resumes at the current elevation after it.
    Gap { width: f64, depth: f64 },
    /// `count` full-width slabs of length `stone_size` at the current
    /// elevation, separated by `spacing`-long trenches (1 m deep), with a
    /// leading trench so the first stone is detached.
    SteppingStones {
        stone_size: f64,
        spacing: f64,
        count: usize,
    },
    /// `count` treads, each `run` long and `rise` above the previous one;
    /// ground after the stairs stays at the final elevation.
    Stairs { rise: f64, run: f64, count: usize },
}

/// Depth of the trench under stepping-stone slabs, meters.
pub const STONE_TRENCH_DEPTH_M: f64 = 1.0;

impl Feature {
    fn length(&self) -> f64 {
        match *self {
            Feature::Flat { length } => length,
            Feature::Gap { width, .. } => width,
            Feature::SteppingStones {
                stone_size,
                spacing,
                count,
            } => spacing + (stone_size + spacing) * count as f64,
            Feature::Stairs { run, count, .. } => run * count as f64,
        }
    }

    fn validate(&self) -> Result<(), TerrainError> {
        let bad = |msg: String| Err(TerrainError::InvalidScenario(msg));
        match *self {
            Feature::Flat { length } => {
                if !(length.is_finite() && length > 0.0) {
                    return bad(format!("Flat length must be > 0, got {length}"));
                }
            }
            Feature::Gap { width, depth } => {
                if !(width.is_finite() && width > 0.0) {
                    return bad(format!("Gap width must be > 0, got {width}"));
                }
                if !(depth.is_finite() && depth > 0.0) {
                    return bad(format!("Gap depth must be > 0, got {depth}"));
                }
            }
            Feature::SteppingStones {
                stone_size,
                spacing,
                count,
            } => {
                if !(stone_size.is_finite() && stone_size > 0.0) {
                    return bad(format!("stone_size must be > 0, got {stone_size}"));
                }
                if !(spacing.is_finite() && spacing > 0.0) {
                    return bad(format!("stone spacing must be > 0, got {spacing}"));
                }
                if count == 0 {
                    return bad("stepping stones need count >= 1".into());
                }
            }
            Feature::Stairs { rise, run, count } => {
                if !(rise.is_finite() && rise != 0.0) {
                    return bad(format!("stair rise must be nonzero, got {rise}"));
                }
                if !(run.is_finite() && run > 0.0) {
                    return bad(format!("stair run must be > 0, got {run}"));
                }
                if count == 0 {
                    return bad("stairs need count >= 1".into());
                }
            }
        }
        Ok(())
    }
}

/// Generator-specific parameters. See [`generate`].
#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioParams {
    /// Level square of side `side`, centered on the world origin.
    FlatWorld {
        elevation: f64,
        side: f64,
        resolution: f64,
    },
    /// Square of side `side` partitioned into `cell_size` patches, each at a
    /// random elevation from `elevation_steps`, plus a diagonal trend of
    /// `diagonal_rise_per_cell` per cell index step. Stored at one grid cell
    /// per patch, centered on the world origin.
    RandomStairs {
        side: f64,
        cell_size: f64,
        elevation_steps: Vec<f64>,
        diagonal_rise_per_cell: f64,
    },
    /// Lane of width `width` (y-centered) whose features run along +x starting
    /// at x = 0, rasterized at `resolution`. `length` optionally fixes the map
    /// length; features longer than it are an error, shorter ones are padded
    /// with level ground at the final elevation.
    Composite {
        width: f64,
        resolution: f64,
        length: Option<f64>,
        features: Vec<Feature>,
    },
}

/// A reproducible terrain task: generator parameters, seed, and the regions
/// episodes start in and aim for.
#[derive(Clone, Debug, PartialEq)]
pub struct TerrainScenario {
    pub params: ScenarioParams,
    pub seed: u64,
    pub spawn_region: Rect,
    pub goal_region: Rect,
}

impl TerrainScenario {
    /// Flat 20 m square with a point spawn at the origin and goals drawn
    /// 3 to 5 m ahead with up to 1 m of lateral offset.
    pub fn flat_world(seed: u64) -> Self {
        TerrainScenario {
            params: ScenarioParams::FlatWorld {
                elevation: 0.0,
                side: 20.0,
                resolution: 0.1,
            },
            seed,
            spawn_region: Rect::new([0.0, 0.0], [0.0, 0.0]),
            goal_region: Rect::new([3.0, -1.0], [5.0, 1.0]),
        }
    }

    /// 20 m square of 1 m elevation patches.
    pub fn random_stairs(seed: u64) -> Self {
        TerrainScenario {
            params: ScenarioParams::RandomStairs {
                side: 20.0,
                cell_size: 1.0,
                elevation_steps: vec![-0.1, 0.0, 0.1],
                diagonal_rise_per_cell: 0.05,
            },
            seed,
            spawn_region: Rect::new([-6.0, -6.0], [-4.0, -4.0]),
            goal_region: Rect::new([-1.0, -1.0], [1.0, 1.0]),
        }
    }

    /// Lane of the given features with a lead-in spawn and a goal past the
    /// last feature. The lane gets 2 m of level ground at each end.
    pub fn composite(features: Vec<Feature>, seed: u64) -> Self {
        let mut full = Vec::with_capacity(features.len() + 2);
        full.push(Feature::Flat { length: 2.0 });
        full.extend(features);
        full.push(Feature::Flat { length: 2.0 });
        let total: f64 = full.iter().map(Feature::length).sum();
        TerrainScenario {
            params: ScenarioParams::Composite {
                width: 4.0,
                resolution: 0.05,
                length: None,
                features: full,
            },
            seed,
            spawn_region: Rect::new([1.0, -0.5], [1.0, 0.5]),
            goal_region: Rect::new([total - 1.0, -0.5], [total - 1.0, 0.5]),
        }
    }

    /// Short name for reports and error messages.
    pub fn label(&self) -> String {
        let kind = match &self.params {
            ScenarioParams::FlatWorld { .. } => "flat_world",
            ScenarioParams::RandomStairs { .. } => "random_stairs",
            ScenarioParams::Composite { .. } => "composite",
        };
        format!("{kind}/{}", self.seed)
    }
}

/// Deterministically renders a scenario to a grid. The same scenario value
/// always produces a bit-identical map.
pub fn generate(scenario: &TerrainScenario) -> Result<HeightMap, TerrainError> {
    let map = match &scenario.params {
        ScenarioParams::FlatWorld {
            elevation,
            side,
            resolution,
        } => {
            check_positive("side", *side)?;
            check_positive("resolution", *resolution)?;
            if !elevation.is_finite() {
                return Err(TerrainError::InvalidScenario(format!(
                    "elevation must be finite, got {elevation}"
                )));
            }
            let n = (side / resolution).round().max(1.0) as usize;
            let origin = centered_origin(n, *resolution);
            HeightMap::new(origin, *resolution, n, n, vec![*elevation; n * n])?
        }
        ScenarioParams::RandomStairs {
            side,
            cell_size,
            elevation_steps,
            diagonal_rise_per_cell,
        } => {
            check_positive("side", *side)?;
            check_positive("cell_size", *cell_size)?;
            if elevation_steps.is_empty() {
                return Err(TerrainError::InvalidScenario(
                    "elevation_steps must not be empty".into(),
                ));
            }
            if let Some(v) = elevation_steps.iter().find(|v| !v.is_finite()) {
                return Err(TerrainError::InvalidScenario(format!(
                    "elevation_steps contains non-finite value {v}"
                )));
            }
            if !diagonal_rise_per_cell.is_finite() {
                return Err(TerrainError::InvalidScenario(
                    "diagonal_rise_per_cell must be finite".into(),
                ));
            }
            let n = (side / cell_size).round().max(1.0) as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
            let mut cells = Vec::with_capacity(n * n);
            for row in 0..n {
                for col in 0..n {
                    let step = elevation_steps[rng.gen_range(0..elevation_steps.len())];
                    cells.push(step + diagonal_rise_per_cell * (row + col) as f64);
                }
            }
            let origin = centered_origin(n, *cell_size);
            HeightMap::new(origin, *cell_size, n, n, cells)?
        }
        ScenarioParams::Composite {
            width,
            resolution,
            length,
            features,
        } => {
            check_positive("width", *width)?;
            check_positive("resolution", *resolution)?;
            if features.is_empty() {
                return Err(TerrainError::InvalidScenario(
                    "composite needs at least one feature".into(),
                ));
            }
            for f in features {
                f.validate()?;
            }
            let needed: f64 = features.iter().map(Feature::length).sum();
            let total = match length {
                Some(l) => {
                    check_positive("length", *l)?;
                    if needed > *l + 1e-9 {
                        return Err(TerrainError::FeaturesExceedFootprint {
                            needed,
                            available: *l,
                        });
                    }
                    *l
                }
                None => needed,
            };
            let n_cols = (total / resolution).round().max(1.0) as usize;
            let n_rows = (width / resolution).round().max(1.0) as usize;
            // Column base elevations first; the lane is constant across y.
            let mut column = vec![0.0; n_cols];
            let mut x0 = 0.0;
            let mut elev = 0.0;
            let col_of = |x: f64| ((x / resolution).round() as i64).clamp(0, n_cols as i64) as usize;
            let fill = |from: f64, to: f64, value: f64, column: &mut Vec<f64>| {
                for c in col_of(from)..col_of(to) {
                    column[c] = value;
                }
            };
            for f in features {
                match *f {
                    Feature::Flat { length } => {
                        fill(x0, x0 + length, elev, &mut column);
                    }
                    Feature::Gap { width, depth } => {
                        fill(x0, x0 + width, elev - depth, &mut column);
                    }
                    Feature::SteppingStones {
                        stone_size,
                        spacing,
                        count,
                    } => {
                        let mut x = x0;
                        fill(x, x + spacing, elev - STONE_TRENCH_DEPTH_M, &mut column);
                        x += spacing;
                        for _ in 0..count {
                            fill(x, x + stone_size, elev, &mut column);
                            x += stone_size;
                            fill(x, x + spacing, elev - STONE_TRENCH_DEPTH_M, &mut column);
                            x += spacing;
                        }
                    }
                    Feature::Stairs { rise, run, count } => {
                        for i in 0..count {
                            elev += rise;
                            let x = x0 + run * i as f64;
                            fill(x, x + run, elev, &mut column);
                        }
                    }
                }
                x0 += f.length();
            }
            // Trailing padding (explicit `length` longer than the features).
            fill(x0, total, elev, &mut column);
            let mut cells = Vec::with_capacity(n_rows * n_cols);
            for _ in 0..n_rows {
                cells.extend_from_slice(&column);
            }
            // First column boundary at x = 0, lane centered on y = 0.
            let origin = [
                0.5 * resolution,
                -0.5 * (n_rows as f64 - 1.0) * resolution,
            ];
            HeightMap::new(origin, *resolution, n_rows, n_cols, cells)?
        }
    };
    check_region(&map, "spawn", &scenario.spawn_region)?;
    check_region(&map, "goal", &scenario.goal_region)?;
    Ok(map)
}

fn centered_origin(n: usize, resolution: f64) -> [f64; 2] {
    let c = -0.5 * (n as f64 - 1.0) * resolution;
    [c, c]
}

fn check_positive(name: &str, v: f64) -> Result<(), TerrainError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(TerrainError::InvalidScenario(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

fn check_region(map: &HeightMap, name: &'static str, r: &Rect) -> Result<(), TerrainError> {
    if r.is_valid() && map.contains(r.min) && map.contains(r.max) {
        Ok(())
    } else {
        Err(TerrainError::RegionOutsideFootprint {
            name,
            min_x: r.min[0],
            max_x: r.max[0],
            min_y: r.min[1],
            max_y: r.max[1],
        })
    }
}
