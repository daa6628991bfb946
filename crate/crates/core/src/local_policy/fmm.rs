//! Fast marching on a 4-connected grid with second-order upwind updates.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::grid::{bresenham, Cell, Grid, NEIGHBORS4};

/// Speed grid cell value that blocks propagation.
pub const BLOCKED: f64 = 0.0;

/// Cells within this radius (in cells) of the source start from their exact
/// Euclidean distance when the straight line to them is open.
const EXACT_INIT_RADIUS: f64 = 4.0;

#[derive(Clone, Copy, PartialEq)]
struct Item {
    value: f64,
    idx: usize,
}

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.value.total_cmp(&self.value).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Solves `|grad T| = 1 / speed` from `source`, in meters. Cells with speed 0
/// stay infinite. Stops early once `until` is accepted; unaccepted cells are
/// then left infinite.
pub fn solve(speed: &Grid<f64>, source: Cell, res: f64, until: Option<Cell>) -> Vec<f64> {
    let n = speed.as_slice().len();
    let mut value = vec![f64::INFINITY; n];
    let mut known = vec![false; n];
    // exact seeds are never overwritten by the upwind update
    let mut fixed = vec![false; n];
    let Some(src) = speed.index_of(source) else {
        return value;
    };
    if speed.as_slice()[src] <= BLOCKED {
        return value;
    }
    let mut heap = BinaryHeap::new();
    value[src] = 0.0;
    fixed[src] = true;
    heap.push(Item { value: 0.0, idx: src });

    let r = EXACT_INIT_RADIUS.ceil() as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            let c = source.offset(dx, dy);
            let d = c.dist(source);
            if d == 0.0 || d > EXACT_INIT_RADIUS {
                continue;
            }
            let Some(i) = speed.index_of(c) else { continue };
            let open = bresenham(source, c).iter().all(|&b| speed.get(b).is_some_and(|&s| s > BLOCKED));
            if open {
                let v = d * res / speed.as_slice()[i];
                value[i] = v;
                fixed[i] = true;
                heap.push(Item { value: v, idx: i });
            }
        }
    }

    let stop = until.and_then(|c| speed.index_of(c));
    while let Some(Item { value: v, idx }) = heap.pop() {
        if known[idx] || v > value[idx] {
            continue;
        }
        known[idx] = true;
        if Some(idx) == stop {
            break;
        }
        let c = speed.cell_of(idx);
        for (dx, dy) in NEIGHBORS4 {
            let nb = c.offset(dx, dy);
            let Some(j) = speed.index_of(nb) else { continue };
            if known[j] || fixed[j] || speed.as_slice()[j] <= BLOCKED {
                continue;
            }
            let u = update(speed, &value, &known, nb, res);
            if u < value[j] {
                value[j] = u;
                heap.push(Item { value: u, idx: j });
            }
        }
    }
    if stop.is_some() {
        for (v, k) in value.iter_mut().zip(&known) {
            if !k {
                *v = f64::INFINITY;
            }
        }
    }
    value
}

fn known_value(speed: &Grid<f64>, value: &[f64], known: &[bool], c: Cell) -> f64 {
    match speed.index_of(c) {
        Some(i) if known[i] => value[i],
        _ => f64::INFINITY,
    }
}

/// Upwind term along one axis: `(alpha, beta, neighbor)` such that the
/// derivative is `sqrt(alpha) * (u - beta)`. Uses the second-order one-sided
/// difference when two cells on the upwind side are known and ordered.
fn axis_term(speed: &Grid<f64>, value: &[f64], known: &[bool], c: Cell, dx: i64, dy: i64, h: f64) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for s in [-1, 1] {
        let a1 = known_value(speed, value, known, c.offset(s * dx, s * dy));
        if !a1.is_finite() || best.is_some_and(|b| b.2 <= a1) {
            continue;
        }
        let a2 = known_value(speed, value, known, c.offset(2 * s * dx, 2 * s * dy));
        best = Some(if a2 <= a1 { (2.25 / (h * h), (4.0 * a1 - a2) / 3.0, a1) } else { (1.0 / (h * h), a1, a1) });
    }
    best
}

fn update(speed: &Grid<f64>, value: &[f64], known: &[bool], c: Cell, res: f64) -> f64 {
    let h = res;
    let rhs = 1.0 / (speed[c] * speed[c]);
    let mut terms: Vec<(f64, f64, f64)> =
        [(1, 0), (0, 1)].iter().filter_map(|&(dx, dy)| axis_term(speed, value, known, c, dx, dy, h)).collect();
    terms.sort_by(|a, b| a.2.total_cmp(&b.2));
    let Some(&(a0, b0, _)) = terms.first() else {
        return f64::INFINITY;
    };
    let single = b0 + (rhs / a0).sqrt();
    if terms.len() == 1 || single <= terms[1].2 {
        return single;
    }
    let (a1, b1, _) = terms[1];
    let aa = a0 + a1;
    let bb = a0 * b0 + a1 * b1;
    let cc = a0 * b0 * b0 + a1 * b1 * b1 - rhs;
    let disc = bb * bb - aa * cc;
    if disc < 0.0 {
        // second-order terms can leave no real root; drop to first order
        let lo = terms[0].2;
        let hi = terms[1].2;
        let hh = h / speed[c];
        if hi - lo >= hh {
            return lo + hh;
        }
        return 0.5 * (lo + hi + (2.0 * hh * hh - (hi - lo) * (hi - lo)).sqrt());
    }
    let u = (bb + disc.sqrt()) / aa;
    u.max(terms[1].2)
}
