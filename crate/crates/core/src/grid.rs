//! Shared 2D grid utilities.

use serde::{Deserialize, Serialize};

/// Integer cell coordinate, `x` is the column and `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i64,
    pub y: i64,
}

impl Cell {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i64, dy: i64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn dist(self, other: Cell) -> f64 {
        (((self.x - other.x).pow(2) + (self.y - other.y).pow(2)) as f64).sqrt()
    }
}

pub const NEIGHBORS4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

pub const NEIGHBORS8: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(width * height, data.len(), "grid data length");
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn index_of(&self, c: Cell) -> Option<usize> {
        self.contains(c).then(|| c.y as usize * self.width + c.x as usize)
    }

    pub fn cell_of(&self, idx: usize) -> Cell {
        Cell::new((idx % self.width) as i64, (idx / self.width) as i64)
    }

    pub fn get(&self, c: Cell) -> Option<&T> {
        self.index_of(c).map(|i| &self.data[i])
    }

    pub fn get_mut(&mut self, c: Cell) -> Option<&mut T> {
        self.index_of(c).map(move |i| &mut self.data[i])
    }

    pub fn set(&mut self, c: Cell, v: T) {
        if let Some(slot) = self.get_mut(c) {
            *slot = v;
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.data.len()).map(|i| self.cell_of(i))
    }
}

impl<T> std::ops::Index<Cell> for Grid<T> {
    type Output = T;
    fn index(&self, c: Cell) -> &T {
        let i = self.index_of(c).expect("cell outside grid");
        &self.data[i]
    }
}

impl<T> std::ops::IndexMut<Cell> for Grid<T> {
    fn index_mut(&mut self, c: Cell) -> &mut T {
        let i = self.index_of(c).expect("cell outside grid");
        &mut self.data[i]
    }
}

/// All cells on the Bresenham line from `a` to `b`, both ends included.
pub fn bresenham(a: Cell, b: Cell) -> Vec<Cell> {
    let dx = (b.x - a.x).abs();
    let dy = -(b.y - a.y).abs();
    let sx = if a.x < b.x { 1 } else { -1 };
    let sy = if a.y < b.y { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (a.x, a.y);
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push(Cell::new(x, y));
        if x == b.x && y == b.y {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Planar pose in meters and radians, heading measured counter-clockwise
/// from +x.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Motion increment expressed in the frame of the pose it starts from:
/// `dx` forward, `dy` to the left.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseDelta {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Translate in the current frame, then rotate.
    pub fn compose(&self, d: PoseDelta) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2 { x: self.x + c * d.dx - s * d.dy, y: self.y + s * d.dx + c * d.dy, theta: wrap_angle(self.theta + d.dtheta) }
    }

    /// World direction of a bearing given in radians, positive to the right.
    pub fn direction_of(&self, bearing: f64) -> f64 {
        wrap_angle(self.theta - bearing)
    }

    /// Bearing (positive right) and range from this pose to `p`.
    pub fn bearing_range_to(&self, p: [f64; 2]) -> (f64, f64) {
        let (dx, dy) = (p[0] - self.x, p[1] - self.y);
        (wrap_angle(self.theta - dy.atan2(dx)), dx.hypot(dy))
    }
}

/// Cell containing a metric point for a grid whose cell (0, 0) starts at
/// `origin`.
pub fn cell_at(p: [f64; 2], origin: [f64; 2], res: f64) -> Cell {
    Cell::new(((p[0] - origin[0]) / res).floor() as i64, ((p[1] - origin[1]) / res).floor() as i64)
}

pub fn cell_center(c: Cell, origin: [f64; 2], res: f64) -> [f64; 2] {
    [origin[0] + (c.x as f64 + 0.5) * res, origin[1] + (c.y as f64 + 0.5) * res]
}

/// Distance from `start` along `angle` to the first blocked cell boundary,
/// capped at `max`. Walks cells with a DDA traversal; a blocked start cell
/// gives 0.
pub fn cast_ray(start: [f64; 2], angle: f64, max: f64, origin: [f64; 2], res: f64, blocked: impl Fn(Cell) -> bool) -> f64 {
    let mut cell = cell_at(start, origin, res);
    if blocked(cell) {
        return 0.0;
    }
    let (dy, dx) = angle.sin_cos();
    let gx = (start[0] - origin[0]) / res;
    let gy = (start[1] - origin[1]) / res;
    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let delta_x = if dx.abs() < 1e-12 { f64::INFINITY } else { 1.0 / dx.abs() };
    let delta_y = if dy.abs() < 1e-12 { f64::INFINITY } else { 1.0 / dy.abs() };
    let mut t_x = if dx > 0.0 { (cell.x as f64 + 1.0 - gx) * delta_x } else { (gx - cell.x as f64) * delta_x };
    let mut t_y = if dy > 0.0 { (cell.y as f64 + 1.0 - gy) * delta_y } else { (gy - cell.y as f64) * delta_y };
    let limit = max / res;
    loop {
        let t = t_x.min(t_y);
        if t >= limit {
            return max;
        }
        if t_x < t_y {
            cell.x += step_x;
            t_x += delta_x;
        } else {
            cell.y += step_y;
            t_y += delta_y;
        }
        if blocked(cell) {
            return t * res;
        }
    }
}

/// Wraps an angle in radians to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}
