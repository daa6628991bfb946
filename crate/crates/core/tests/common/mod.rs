//! Grid oracles shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use sea_core::grid::{cast_ray, cell_at, cell_center, wrap_angle, Cell, Grid, NEIGHBORS8};
use sea_core::local_policy::{next_action_at, DistanceField, STEP_LENGTH};
use sea_core::rng::seeded;
use sea_core::LocalAction;

/// Random maze with `corr`-wide corridors, 1-cell walls and a few loops.
/// 1.0 is free, 0.0 is wall.
pub fn maze(seed: u64, cells: usize, corr: usize) -> Grid<f64> {
    let mut rng = seeded(seed);
    let pitch = corr + 1;
    let n = cells * pitch + 1;
    let mut g = Grid::filled(n, n, 0.0);
    let open = |g: &mut Grid<f64>, x0: usize, y0: usize, w: usize, h: usize| {
        for y in y0..(y0 + h).min(n - 1) {
            for x in x0..(x0 + w).min(n - 1) {
                g.set(Cell::new(x as i64, y as i64), 1.0);
            }
        }
    };
    let mut seen = vec![false; cells * cells];
    let mut stack = vec![(0usize, 0usize)];
    seen[0] = true;
    open(&mut g, 1, 1, corr, corr);
    while let Some(&(cx, cy)) = stack.last() {
        let mut nbs: Vec<(usize, usize)> = [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .map(|&(dx, dy)| (cx as i64 + dx, cy as i64 + dy))
            .filter(|&(x, y)| x >= 0 && y >= 0 && (x as usize) < cells && (y as usize) < cells)
            .map(|(x, y)| (x as usize, y as usize))
            .filter(|&(x, y)| !seen[y * cells + x])
            .collect();
        if nbs.is_empty() {
            stack.pop();
            continue;
        }
        nbs.shuffle(&mut rng);
        let (nx, ny) = nbs[0];
        seen[ny * cells + nx] = true;
        let (x0, y0) = (cx.min(nx) * pitch + 1, cy.min(ny) * pitch + 1);
        if nx != cx {
            open(&mut g, x0, y0, pitch + corr, corr);
        } else {
            open(&mut g, x0, y0, corr, pitch + corr);
        }
        stack.push((nx, ny));
    }
    for _ in 0..cells {
        let (cx, cy) = (rng.random_range(0..cells - 1), rng.random_range(0..cells));
        if rng.random_bool(0.5) {
            open(&mut g, cx * pitch + 1, cy * pitch + 1, pitch + corr, corr);
        } else {
            open(&mut g, cy * pitch + 1, cx * pitch + 1, corr, pitch + corr);
        }
    }
    g
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// 8-connected shortest paths without corner cutting, in meters.
pub fn octile(speed: &Grid<f64>, src: Cell, res: f64) -> Grid<f64> {
    let ok = |c: Cell| speed.get(c).is_some_and(|&s| s > 0.0);
    let mut d = Grid::filled(speed.width(), speed.height(), f64::INFINITY);
    let mut heap = BinaryHeap::new();
    d.set(src, 0.0);
    heap.push(Item(0.0, speed.index_of(src).unwrap()));
    while let Some(Item(v, i)) = heap.pop() {
        let c = speed.cell_of(i);
        if v > d[c] {
            continue;
        }
        for (dx, dy) in NEIGHBORS8 {
            let nb = c.offset(dx, dy);
            if !ok(nb) || (dx != 0 && dy != 0 && !(ok(c.offset(dx, 0)) && ok(c.offset(0, dy)))) {
                continue;
            }
            let w = if dx != 0 && dy != 0 { 2f64.sqrt() } else { 1.0 } * res;
            if v + w < d[nb] {
                d.set(nb, v + w);
                heap.push(Item(v + w, speed.index_of(nb).unwrap()));
            }
        }
    }
    d
}

/// Drives the local controller with point kinematics, treating `speed` as
/// the world. Returns the step count on arrival.
pub fn follow(speed: &Grid<f64>, field: &DistanceField, start: Cell, max_steps: usize) -> Option<usize> {
    let res = field.resolution;
    let origin = [0.0, 0.0];
    let mut pos = cell_center(start, origin, res);
    let mut heading = 0.0;
    for step in 0..max_steps {
        match next_action_at(field, origin, pos, heading) {
            LocalAction::StopLocal => return Some(step),
            LocalAction::Blocked => return None,
            LocalAction::TurnLeft => heading = wrap_angle(heading + PI / 6.0),
            LocalAction::TurnRight => heading = wrap_angle(heading - PI / 6.0),
            LocalAction::Forward => {
                let free = cast_ray(pos, heading, STEP_LENGTH, origin, res, |c| speed.get(c).is_none_or(|&s| s <= 0.0));
                let d = (free - 1e-6).max(0.0);
                pos = [pos[0] + d * heading.cos(), pos[1] + d * heading.sin()];
                debug_assert!(field.value(cell_at(pos, origin, res)).is_finite());
            }
        }
    }
    None
}
