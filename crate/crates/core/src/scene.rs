//! Procedural scenes with a latent aesthetic field.
//!
//! A scene is a walled occupancy grid carved into rooms, a mixture of
//! Gaussian aesthetic kernels over pose space, and a handful of salient
//! objects. The camera "sees" a scene through [`render_view`], which ray-casts
//! the grid and reports kernel visibility per ray instead of pixels.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub const CELL_SIZE: f64 = 0.25;
pub const RAY_COUNT: usize = 16;
pub const FOV: f64 = PI / 2.0;
pub const RAY_CAP: f64 = 8.0;
pub const SCENE_FORMAT: &str = "autophoto-scene/1";

/// Sentinel stored in [`ViewObservation::salient_x`] when nothing is visible.
pub const NO_SALIENT: f64 = -1.0;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("grid must be at least 16x16 cells, got {width}x{height}")]
    GridTooSmall { width: usize, height: usize },
    #[error("scene needs at least one aesthetic hotspot")]
    NoHotspots,
    #[error("invalid generation parameter: {0}")]
    InvalidParam(String),
    #[error("malformed scene file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = a - two_pi * ((a + PI) / two_pi).floor();
    if r >= PI {
        r -= two_pi;
    }
    if r < -PI {
        r += two_pi;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        ((self.x - x).powi(2) + (self.y - y).powi(2)).sqrt()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3}, {:.1}°)", self.x, self.y, self.theta.to_degrees())
    }
}

/// Row-major occupancy grid; `true` means blocked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    width: usize,
    height: usize,
    occupied: Vec<bool>,
}

impl Grid {
    pub fn filled(width: usize, height: usize) -> Self {
        Self { width, height, occupied: vec![true; width * height] }
    }

    pub fn from_cells(width: usize, height: usize, occupied: Vec<bool>) -> Result<Self, SceneError> {
        if occupied.len() != width * height {
            return Err(SceneError::Format(format!(
                "occupancy has {} cells, expected {}",
                occupied.len(),
                width * height
            )));
        }
        Ok(Self { width, height, occupied })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * CELL_SIZE
    }

    pub fn height_m(&self) -> f64 {
        self.height as f64 * CELL_SIZE
    }

    /// Out-of-range cells count as occupied.
    pub fn is_occupied(&self, cx: i64, cy: i64) -> bool {
        if cx < 0 || cy < 0 || cx >= self.width as i64 || cy >= self.height as i64 {
            return true;
        }
        self.occupied[cy as usize * self.width + cx as usize]
    }

    pub fn set(&mut self, cx: usize, cy: usize, occupied: bool) {
        self.occupied[cy * self.width + cx] = occupied;
    }

    pub fn cell_of(x: f64, y: f64) -> (i64, i64) {
        ((x / CELL_SIZE).floor() as i64, (y / CELL_SIZE).floor() as i64)
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        if !x.is_finite() || !y.is_finite() {
            return false;
        }
        let (cx, cy) = Self::cell_of(x, y);
        !self.is_occupied(cx, cy)
    }

    pub fn navigable_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for cy in 0..self.height {
            for cx in 0..self.width {
                if !self.occupied[cy * self.width + cx] {
                    out.push((cx, cy));
                }
            }
        }
        out
    }

    /// Packs cells row-major, least significant bit first, and hex-encodes.
    pub fn pack_hex(&self) -> String {
        let mut bytes = vec![0u8; self.occupied.len().div_ceil(8)];
        for (i, &occ) in self.occupied.iter().enumerate() {
            if occ {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        hex::encode(bytes)
    }

    pub fn unpack_hex(width: usize, height: usize, packed: &str) -> Result<Self, SceneError> {
        let bytes = hex::decode(packed).map_err(|e| SceneError::Format(format!("occupancy: {e}")))?;
        let n = width * height;
        if bytes.len() != n.div_ceil(8) {
            return Err(SceneError::Format(format!(
                "occupancy has {} bytes, expected {}",
                bytes.len(),
                n.div_ceil(8)
            )));
        }
        let occupied = (0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect();
        Ok(Self { width, height, occupied })
    }

    /// Distance along a ray until the first occupied cell, capped at `cap`.
    ///
    /// Amanatides-Woo grid traversal.
    pub fn cast_ray(&self, x: f64, y: f64, angle: f64, cap: f64) -> f64 {
        let (dx, dy) = (angle.cos(), angle.sin());
        let (mut cx, mut cy) = Self::cell_of(x, y);
        if self.is_occupied(cx, cy) {
            return 0.0;
        }
        let (step_x, mut t_max_x, t_delta_x) = axis_setup(x, dx, cx);
        let (step_y, mut t_max_y, t_delta_y) = axis_setup(y, dy, cy);
        loop {
            let t = if t_max_x < t_max_y {
                let t = t_max_x;
                cx += step_x;
                t_max_x += t_delta_x;
                t
            } else {
                let t = t_max_y;
                cy += step_y;
                t_max_y += t_delta_y;
                t
            };
            if t >= cap {
                return cap;
            }
            if self.is_occupied(cx, cy) {
                return t;
            }
        }
    }
}

fn axis_setup(origin: f64, dir: f64, cell: i64) -> (i64, f64, f64) {
    if dir > 0.0 {
        (1, ((cell + 1) as f64 * CELL_SIZE - origin) / dir, CELL_SIZE / dir)
    } else if dir < 0.0 {
        (-1, (cell as f64 * CELL_SIZE - origin) / dir, -CELL_SIZE / dir)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AestheticKernel {
    pub center: [f64; 2],
    pub preferred_heading: f64,
    pub spatial_sigma: f64,
    pub angular_sigma: f64,
    pub weight: f64,
}

impl AestheticKernel {
    /// Spatial Gaussian factor times weight; the angular factor is separate.
    fn spatial_strength(&self, x: f64, y: f64) -> f64 {
        let d2 = (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2);
        self.weight * (-d2 / (2.0 * self.spatial_sigma * self.spatial_sigma)).exp()
    }

    fn angular_factor(&self, heading_offset: f64) -> f64 {
        (-heading_offset * heading_offset / (2.0 * self.angular_sigma * self.angular_sigma)).exp()
    }

    pub fn value(&self, pose: &Pose) -> f64 {
        let dtheta = wrap_angle(pose.theta - self.preferred_heading);
        self.spatial_strength(pose.x, pose.y) * self.angular_factor(dtheta)
    }

    fn validate(&self) -> Result<(), SceneError> {
        let ok = self.spatial_sigma > 0.0
            && self.angular_sigma > 0.0
            && self.weight > 0.0
            && (-PI..PI).contains(&self.preferred_heading)
            && self.center.iter().all(|c| c.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SceneError::Format(format!("invalid kernel {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SalientObject {
    pub position: [f64; 2],
    pub radius: f64,
}

/// Camera constants, recorded in every scene file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub fov_deg: f64,
    pub ray_cap: f64,
    pub rays: usize,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self { fov_deg: FOV.to_degrees(), ray_cap: RAY_CAP, rays: RAY_COUNT }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub scene_id: u64,
    pub rng_seed: u64,
    pub grid: Grid,
    pub hotspots: Vec<AestheticKernel>,
    pub salient_objects: Vec<SalientObject>,
    /// Scale of the wall-facing penalty in [`true_aesthetic`].
    pub wall_penalty: f64,
}

/// Knobs for [`generate_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub width: usize,
    pub height: usize,
    pub hotspots: usize,
    pub salient_objects: usize,
    /// Minimum room side, in cells.
    pub min_room: usize,
    /// Maximum binary-split depth when carving rooms.
    pub max_split_depth: usize,
    pub door_width: usize,
    pub spatial_sigma: [f64; 2],
    pub angular_sigma_deg: [f64; 2],
    pub weight: [f64; 2],
    pub salient_radius: [f64; 2],
    pub wall_penalty: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            hotspots: 12,
            salient_objects: 4,
            min_room: 6,
            max_split_depth: 2,
            door_width: 3,
            spatial_sigma: [0.25, 0.5],
            angular_sigma_deg: [30.0, 50.0],
            weight: [0.6, 1.4],
            salient_radius: [0.1, 0.3],
            wall_penalty: 0.05,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.width < 16 || self.height < 16 {
            return Err(SceneError::GridTooSmall { width: self.width, height: self.height });
        }
        if self.hotspots == 0 {
            return Err(SceneError::NoHotspots);
        }
        let ranges = [
            ("spatial_sigma", self.spatial_sigma),
            ("angular_sigma_deg", self.angular_sigma_deg),
            ("weight", self.weight),
            ("salient_radius", self.salient_radius),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(SceneError::InvalidParam(format!("{name} range [{lo}, {hi}]")));
            }
        }
        if self.min_room < 2 || self.door_width == 0 {
            return Err(SceneError::InvalidParam("min_room >= 2 and door_width >= 1 required".into()));
        }
        if !(self.wall_penalty >= 0.0) {
            return Err(SceneError::InvalidParam("wall_penalty must be >= 0".into()));
        }
        Ok(())
    }
}

/// Inclusive cell rectangle.
#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Rect {
    fn w(&self) -> usize {
        self.x1 - self.x0 + 1
    }
    fn h(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

fn carve_rooms(grid: &mut Grid, rect: Rect, depth: usize, cfg: &GenerationConfig, rng: &mut seed::Rng) {
    let min = cfg.min_room;
    let can_split_x = rect.w() >= 2 * min + 1;
    let can_split_y = rect.h() >= 2 * min + 1;
    if depth >= cfg.max_split_depth || !(can_split_x || can_split_y) {
        for cy in rect.y0..=rect.y1 {
            for cx in rect.x0..=rect.x1 {
                grid.set(cx, cy, false);
            }
        }
        return;
    }
    let vertical = match (can_split_x, can_split_y) {
        (true, true) => {
            if rect.w() == rect.h() {
                rng.gen_bool(0.5)
            } else {
                rect.w() > rect.h()
            }
        }
        (x, _) => x,
    };
    if vertical {
        let wall = rng.gen_range(rect.x0 + min..=rect.x1 - min);
        let left = Rect { x1: wall - 1, ..rect };
        let right = Rect { x0: wall + 1, ..rect };
        carve_rooms(grid, left, depth + 1, cfg, rng);
        carve_rooms(grid, right, depth + 1, cfg, rng);
        let doors: Vec<usize> = (rect.y0..=rect.y1)
            .filter(|&cy| !grid.is_occupied(wall as i64 - 1, cy as i64) && !grid.is_occupied(wall as i64 + 1, cy as i64))
            .collect();
        open_door(grid, &doors, cfg.door_width, rng, |g, p| g.set(wall, p, false));
    } else {
        let wall = rng.gen_range(rect.y0 + min..=rect.y1 - min);
        let bottom = Rect { y1: wall - 1, ..rect };
        let top = Rect { y0: wall + 1, ..rect };
        carve_rooms(grid, bottom, depth + 1, cfg, rng);
        carve_rooms(grid, top, depth + 1, cfg, rng);
        let doors: Vec<usize> = (rect.x0..=rect.x1)
            .filter(|&cx| !grid.is_occupied(cx as i64, wall as i64 - 1) && !grid.is_occupied(cx as i64, wall as i64 + 1))
            .collect();
        open_door(grid, &doors, cfg.door_width, rng, |g, p| g.set(p, wall, false));
    }
}

/// Opens a run of up to `width` consecutive candidate positions.
fn open_door(
    grid: &mut Grid,
    candidates: &[usize],
    width: usize,
    rng: &mut seed::Rng,
    mut open: impl FnMut(&mut Grid, usize),
) {
    if candidates.is_empty() {
        return;
    }
    let start = rng.gen_range(0..candidates.len());
    let mut prev = candidates[start];
    open(grid, prev);
    for &c in candidates[start + 1..].iter().take(width - 1) {
        if c != prev + 1 {
            break;
        }
        open(grid, c);
        prev = c;
    }
}

fn random_point_in(cells: &[(usize, usize)], rng: &mut seed::Rng) -> (f64, f64) {
    let (cx, cy) = cells[rng.gen_range(0..cells.len())];
    (
        (cx as f64 + rng.gen::<f64>()) * CELL_SIZE,
        (cy as f64 + rng.gen::<f64>()) * CELL_SIZE,
    )
}

fn uniform(range: [f64; 2], rng: &mut seed::Rng) -> f64 {
    if range[1] > range[0] {
        rng.gen_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// Generates a walled, room-partitioned scene.
///
/// Scene ids are supplied by the caller; the scene's RNG is seeded from
/// `seed` alone, so equal inputs give equal scenes.
pub fn generate_scene(scene_id: u64, seed: u64, cfg: &GenerationConfig) -> Result<SceneSpec, SceneError> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::split(seed, seed::stream::SCENE));
    let mut grid = Grid::filled(cfg.width, cfg.height);
    let interior = Rect { x0: 1, y0: 1, x1: cfg.width - 2, y1: cfg.height - 2 };
    carve_rooms(&mut grid, interior, 0, cfg, &mut rng);
    let cells = grid.navigable_cells();
    debug_assert!(!cells.is_empty());

    let mut hotspots = Vec::with_capacity(cfg.hotspots);
    for _ in 0..cfg.hotspots {
        let (x, y) = random_point_in(&cells, &mut rng);
        // Prefer a heading with at least a metre of open view.
        let mut heading = wrap_angle(rng.gen_range(-PI..PI));
        for _ in 0..16 {
            if grid.cast_ray(x, y, heading, RAY_CAP) >= 1.0 {
                break;
            }
            heading = wrap_angle(rng.gen_range(-PI..PI));
        }
        hotspots.push(AestheticKernel {
            center: [x, y],
            preferred_heading: heading,
            spatial_sigma: uniform(cfg.spatial_sigma, &mut rng),
            angular_sigma: uniform(cfg.angular_sigma_deg, &mut rng).to_radians(),
            weight: uniform(cfg.weight, &mut rng),
        });
    }
    let salient_objects = (0..cfg.salient_objects)
        .map(|_| {
            let (x, y) = random_point_in(&cells, &mut rng);
            SalientObject { position: [x, y], radius: uniform(cfg.salient_radius, &mut rng) }
        })
        .collect();

    Ok(SceneSpec {
        scene_id,
        rng_seed: seed,
        grid,
        hotspots,
        salient_objects,
        wall_penalty: cfg.wall_penalty,
    })
}

/// What the camera reports at a pose. Stands in for an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewObservation {
    pub depth_rays: [f64; RAY_COUNT],
    pub hotspot_intensity: [f64; RAY_COUNT],
    pub salient_x: f64,
    pub salient_present: bool,
    pub brightness: f64,
}

impl ViewObservation {
    pub fn with_brightness(&self, brightness: f64) -> Self {
        Self { brightness, ..self.clone() }
    }

    pub fn mean_depth(&self) -> f64 {
        self.depth_rays.iter().sum::<f64>() / RAY_COUNT as f64
    }
}

/// Angle of ray `i` relative to the heading; ray 0 is the leftmost.
pub fn ray_offset(i: usize) -> f64 {
    let bin = FOV / RAY_COUNT as f64;
    FOV / 2.0 - (i as f64 + 0.5) * bin
}

/// Viewport column for a relative bearing; `None` outside the field of view.
fn viewport_x(relative_bearing: f64) -> Option<f64> {
    if relative_bearing.abs() > FOV / 2.0 {
        return None;
    }
    Some(((FOV / 2.0 - relative_bearing) / FOV).clamp(0.0, 1.0))
}

impl SceneSpec {
    pub fn is_navigable(&self, pose: &Pose) -> bool {
        self.grid.is_free_point(pose.x, pose.y)
    }

    pub fn depth_rays(&self, pose: &Pose) -> [f64; RAY_COUNT] {
        let mut out = [0.0; RAY_COUNT];
        for (i, d) in out.iter_mut().enumerate() {
            *d = self.grid.cast_ray(pose.x, pose.y, pose.theta + ray_offset(i), RAY_CAP) / RAY_CAP;
        }
        out
    }

    fn wall_penalty_from(&self, depth: &[f64; RAY_COUNT]) -> f64 {
        let mean = depth.iter().sum::<f64>() / RAY_COUNT as f64;
        self.wall_penalty * (1.0 - mean)
    }

    /// Scene rotated a quarter turn counter-clockwise about the origin,
    /// re-anchored so the grid stays in the positive quadrant.
    pub fn rotated_quarter_turn(&self) -> SceneSpec {
        let (w, h) = (self.grid.width, self.grid.height);
        let mut grid = Grid::filled(h, w);
        for cy in 0..h {
            for cx in 0..w {
                let occ = self.grid.is_occupied(cx as i64, cy as i64);
                grid.set(h - 1 - cy, cx, occ);
            }
        }
        let hm = self.grid.height_m();
        let rot = |p: [f64; 2]| [hm - p[1], p[0]];
        SceneSpec {
            scene_id: self.scene_id,
            rng_seed: self.rng_seed,
            grid,
            hotspots: self
                .hotspots
                .iter()
                .map(|k| AestheticKernel {
                    center: rot(k.center),
                    preferred_heading: wrap_angle(k.preferred_heading + PI / 2.0),
                    ..*k
                })
                .collect(),
            salient_objects: self
                .salient_objects
                .iter()
                .map(|s| SalientObject { position: rot(s.position), ..*s })
                .collect(),
            wall_penalty: self.wall_penalty,
        }
    }

    /// Maps a pose into the frame of [`Self::rotated_quarter_turn`].
    pub fn rotate_pose_quarter_turn(&self, pose: &Pose) -> Pose {
        Pose::new(self.grid.height_m() - pose.y, pose.x, pose.theta + PI / 2.0)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.grid.width < 16 || self.grid.height < 16 {
            return Err(SceneError::GridTooSmall { width: self.grid.width, height: self.grid.height });
        }
        if self.hotspots.is_empty() {
            return Err(SceneError::NoHotspots);
        }
        if self.grid.navigable_cells().is_empty() {
            return Err(SceneError::Format("scene has no navigable cell".into()));
        }
        let w = self.grid.width as i64;
        let h = self.grid.height as i64;
        for cx in 0..w {
            for cy in 0..h {
                let border = cx == 0 || cy == 0 || cx == w - 1 || cy == h - 1;
                if border && !self.grid.is_occupied(cx, cy) {
                    return Err(SceneError::Format(format!("boundary cell ({cx}, {cy}) is open")));
                }
            }
        }
        for k in &self.hotspots {
            k.validate()?;
            let inside = (0.0..self.grid.width_m()).contains(&k.center[0])
                && (0.0..self.grid.height_m()).contains(&k.center[1]);
            if !inside {
                return Err(SceneError::Format(format!("hotspot center {:?} outside grid", k.center)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, SceneError> {
        self.to_json_with_meta(None)
    }

    /// Canonical JSON; `meta` carries provenance such as the tool version.
    pub fn to_json_with_meta(&self, meta: Option<serde_json::Value>) -> Result<String, SceneError> {
        let file = SceneFile {
            format: SCENE_FORMAT.to_string(),
            scene_id: self.scene_id,
            rng_seed: self.rng_seed,
            width: self.grid.width,
            height: self.grid.height,
            cell_size: CELL_SIZE,
            occupancy: self.grid.pack_hex(),
            camera: CameraSpec::default(),
            wall_penalty: self.wall_penalty,
            hotspots: self.hotspots.clone(),
            salient_objects: self.salient_objects.clone(),
            meta,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let file: SceneFile = serde_json::from_str(text)?;
        if file.format != SCENE_FORMAT {
            return Err(SceneError::Format(format!("unsupported format tag {:?}", file.format)));
        }
        if file.cell_size != CELL_SIZE || file.camera != CameraSpec::default() {
            return Err(SceneError::Format("camera or cell size differs from this build".into()));
        }
        let grid = Grid::unpack_hex(file.width, file.height, &file.occupancy)?;
        let scene = SceneSpec {
            scene_id: file.scene_id,
            rng_seed: file.rng_seed,
            grid,
            hotspots: file.hotspots,
            salient_objects: file.salient_objects,
            wall_penalty: file.wall_penalty,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn write_to(&self, mut w: impl Write, meta: Option<serde_json::Value>) -> Result<(), SceneError> {
        w.write_all(self.to_json_with_meta(meta)?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, SceneError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    format: String,
    scene_id: u64,
    rng_seed: u64,
    width: usize,
    height: usize,
    cell_size: f64,
    occupancy: String,
    camera: CameraSpec,
    wall_penalty: f64,
    hotspots: Vec<AestheticKernel>,
    salient_objects: Vec<SalientObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

/// Ground-truth aesthetic value of a pose: kernel mixture minus a penalty
/// that grows as the view closes in on walls.
pub fn true_aesthetic(scene: &SceneSpec, pose: &Pose) -> f64 {
    let field: f64 = scene.hotspots.iter().map(|k| k.value(pose)).sum();
    field - scene.wall_penalty_from(&scene.depth_rays(pose))
}

pub fn render_view(scene: &SceneSpec, pose: &Pose, brightness: f64) -> ViewObservation {
    debug_assert!(brightness > 0.0);
    let depth_rays = scene.depth_rays(pose);
    let mut hotspot_intensity = [0.0; RAY_COUNT];
    let bin = FOV / RAY_COUNT as f64;
    for k in &scene.hotspots {
        let offset = wrap_angle(k.preferred_heading - pose.theta);
        if offset.abs() > FOV / 2.0 {
            continue;
        }
        let i = (((FOV / 2.0 - offset) / bin).floor() as usize).min(RAY_COUNT - 1);
        hotspot_intensity[i] += k.spatial_strength(pose.x, pose.y) * k.angular_factor(offset);
    }
    let salient = salient_projection(scene, pose);
    ViewObservation {
        depth_rays,
        hotspot_intensity,
        salient_x: salient.unwrap_or(NO_SALIENT),
        salient_present: salient.is_some(),
        brightness,
    }
}

/// Viewport column of the nearest unoccluded salient object inside the FOV.
pub fn salient_projection(scene: &SceneSpec, pose: &Pose) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for obj in &scene.salient_objects {
        let (dx, dy) = (obj.position[0] - pose.x, obj.position[1] - pose.y);
        let dist = (dx * dx + dy * dy).sqrt();
        if dist > RAY_CAP {
            continue;
        }
        let bearing = dy.atan2(dx);
        let Some(vx) = viewport_x(wrap_angle(bearing - pose.theta)) else {
            continue;
        };
        let free = scene.grid.cast_ray(pose.x, pose.y, bearing, RAY_CAP);
        if free + obj.radius < dist {
            continue;
        }
        if best.map_or(true, |(d, _)| dist < d) {
            best = Some((dist, vx));
        }
    }
    best.map(|(_, x)| x)
}

/// Draws a pose uniformly over navigable cells and headings.
/// Positions live on a 2^-24 m lattice so that a move followed by its
/// inverse returns exactly to the start.
const POSITION_QUANTUM: f64 = 1.0 / (1u64 << 24) as f64;

pub(crate) fn quantize_position(v: f64) -> f64 {
    (v / POSITION_QUANTUM).round() * POSITION_QUANTUM
}

pub fn random_pose(cells: &[(usize, usize)], rng: &mut seed::Rng) -> Pose {
    let (x, y) = random_point_in(cells, rng);
    Pose::new(quantize_position(x), quantize_position(y), rng.gen_range(-PI..PI))
}

pub fn sample_views(scene: &SceneSpec, n: usize, seed: u64) -> Vec<(Pose, ViewObservation)> {
    let cells = scene.grid.navigable_cells();
    let mut rng = seed::rng(seed);
    (0..n)
        .map(|_| {
            let pose = random_pose(&cells, &mut rng);
            (pose, render_view(scene, &pose, 1.0))
        })
        .collect()
}
