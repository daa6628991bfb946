//! Procedural single-floor houses: a hallway spine with rooms on both sides.

use std::collections::VecDeque;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Door, GridWorld, ObjectInstance, Rect, Room, RoomType, CATEGORY_NAMES};
use crate::error::{Result, SeaError};
use crate::grid::{Cell, Grid, NEIGHBORS4};
use crate::rng::{stream, streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPrior {
    pub room: RoomType,
    pub category: usize,
    /// Probability that one instance is placed in a room of this type.
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HouseConfig {
    /// Total room count including the hallway.
    pub rooms_min: usize,
    pub rooms_max: usize,
    pub resolution: f64,
    pub room_width_m: [f64; 2],
    pub room_depth_m: [f64; 2],
    pub hallway_width_m: f64,
    pub door_cells: [usize; 2],
    pub room_type_weights: Vec<(RoomType, f64)>,
    pub object_priors: Vec<ObjectPrior>,
    /// Probability of a door between side-by-side rooms of each type pair;
    /// pairs not listed use `default_link_p`.
    pub room_links: Vec<(RoomType, RoomType, f64)>,
    pub default_link_p: f64,
    /// Room types sort along each side of the hallway by their position in
    /// this list, perturbed by `zone_jitter` ranks. Empty leaves them in
    /// draw order.
    pub zone_order: Vec<RoomType>,
    pub zone_jitter: f64,
    pub decoys: usize,
    pub goal_categories: Vec<usize>,
}

fn prior(room: RoomType, category: &str, p: f64) -> ObjectPrior {
    let category = CATEGORY_NAMES.iter().position(|&n| n == category).expect("known category name");
    ObjectPrior { room, category, p }
}

impl Default for HouseConfig {
    fn default() -> Self {
        use RoomType::*;
        let object_priors = vec![
            prior(Bedroom, "bed", 0.95),
            prior(LivingRoom, "sofa", 0.9),
            prior(Bedroom, "sofa", 0.1),
            prior(LivingRoom, "tv_monitor", 0.7),
            prior(Bedroom, "tv_monitor", 0.3),
            prior(Kitchen, "refrigerator", 0.95),
            prior(Kitchen, "stove", 0.9),
            prior(Kitchen, "sink", 0.8),
            prior(Bathroom, "sink", 0.9),
            prior(Toilet, "sink", 0.5),
            prior(Toilet, "toilet", 0.95),
            prior(Bathroom, "toilet", 0.6),
            prior(Bathroom, "bathtub", 0.6),
            prior(DiningRoom, "dining_table", 0.95),
            prior(Kitchen, "dining_table", 0.3),
            prior(DiningRoom, "chair", 0.95),
            prior(Kitchen, "chair", 0.4),
            prior(LivingRoom, "chair", 0.4),
            prior(Bedroom, "chair", 0.3),
            prior(Bedroom, "wardrobe", 0.6),
            prior(Closet, "wardrobe", 0.9),
            prior(LivingRoom, "plant", 0.5),
            prior(DiningRoom, "plant", 0.3),
            prior(Bedroom, "plant", 0.2),
            prior(Bedroom, "desk", 0.4),
            prior(LivingRoom, "desk", 0.2),
            prior(Bathroom, "shower", 0.7),
            prior(Kitchen, "cabinet", 0.5),
            prior(Closet, "cabinet", 0.6),
            prior(Bathroom, "cabinet", 0.3),
            prior(Bedroom, "nightstand", 0.9),
            prior(Bedroom, "nightstand", 0.5),
            prior(Bedroom, "lamp", 0.6),
            prior(LivingRoom, "lamp", 0.6),
            prior(LivingRoom, "bookshelf", 0.7),
            prior(Bedroom, "bookshelf", 0.2),
            prior(LivingRoom, "sofa", 0.4),
            prior(Kitchen, "counter", 0.95),
            prior(Kitchen, "counter", 0.6),
            prior(Kitchen, "cabinet", 0.5),
            prior(Bathroom, "towel", 0.9),
            prior(Toilet, "towel", 0.6),
            prior(DiningRoom, "chair", 0.9),
            prior(DiningRoom, "chair", 0.7),
            prior(DiningRoom, "cabinet", 0.3),
            prior(Closet, "shoe_rack", 0.8),
        ];
        Self {
            rooms_min: 8,
            rooms_max: 10,
            resolution: 0.1,
            room_width_m: [3.0, 6.0],
            room_depth_m: [3.0, 4.5],
            hallway_width_m: 1.6,
            door_cells: [8, 10],
            room_type_weights: vec![
                (LivingRoom, 1.0),
                (Bedroom, 1.6),
                (Kitchen, 1.0),
                (Closet, 0.5),
                (DiningRoom, 0.8),
                (Bathroom, 0.9),
                (Toilet, 0.6),
            ],
            object_priors,
            room_links: vec![
                (Bedroom, Bathroom, 0.6),
                (Kitchen, DiningRoom, 0.8),
                (LivingRoom, DiningRoom, 0.7),
                (Bedroom, Closet, 0.7),
                (LivingRoom, Kitchen, 0.4),
            ],
            default_link_p: 0.15,
            zone_order: vec![LivingRoom, DiningRoom, Kitchen, Toilet, Bathroom, Bedroom, Closet],
            zone_jitter: 1.5,
            decoys: 1,
            goal_categories: ["bed", "sofa", "tv_monitor", "toilet", "plant", "chair"]
                .iter()
                .map(|n| CATEGORY_NAMES.iter().position(|c| c == n).expect("known goal"))
                .collect(),
        }
    }
}

impl HouseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rooms_min == 0 || self.rooms_min > self.rooms_max || self.rooms_max > 12 {
            return Err(SeaError::Config(format!("room count range {}..={} invalid", self.rooms_min, self.rooms_max)));
        }
        if self.resolution <= 0.0 || self.room_width_m[0] > self.room_width_m[1] || self.room_depth_m[0] > self.room_depth_m[1] {
            return Err(SeaError::Config("invalid room geometry".into()));
        }
        if self.room_width_m[0] < 2.0 || self.room_depth_m[0] < 2.0 || self.hallway_width_m < 1.0 {
            return Err(SeaError::Config("rooms must be at least 2 m and hallways 1 m".into()));
        }
        if self.door_cells[0] < 3 || self.door_cells[0] > self.door_cells[1] {
            return Err(SeaError::Config("invalid door width range".into()));
        }
        if !(self.zone_jitter.is_finite() && self.zone_jitter >= 0.0) {
            return Err(SeaError::Config("zone jitter must be non-negative".into()));
        }
        if self.room_type_weights.iter().all(|(_, w)| *w <= 0.0) {
            return Err(SeaError::Config("room type weights are all zero".into()));
        }
        if let Some(p) = self.object_priors.iter().find(|p| p.category >= CATEGORY_NAMES.len() || !(0.0..=1.0).contains(&p.p)) {
            return Err(SeaError::Config(format!("bad object prior {p:?}")));
        }
        if self.goal_categories.iter().any(|&g| g >= CATEGORY_NAMES.len()) {
            return Err(SeaError::Config("goal category out of range".into()));
        }
        Ok(())
    }

    fn link_p(&self, a: RoomType, b: RoomType) -> f64 {
        self.room_links.iter().find(|(x, y, _)| (*x == a && *y == b) || (*x == b && *y == a)).map_or(self.default_link_p, |l| l.2)
    }
}

fn cells(m: f64, res: f64) -> usize {
    (m / res).round() as usize
}

fn open_rect(g: &mut Grid<bool>, r: Rect) {
    for y in r.y0..r.y0 + r.h as i64 {
        for x in r.x0..r.x0 + r.w as i64 {
            g.set(Cell::new(x, y), false);
        }
    }
}

/// Deterministic house for `seed`.
pub fn generate_house(seed: u64, cfg: &HouseConfig) -> Result<GridWorld> {
    cfg.validate()?;
    let mut rng = stream(seed, streams::WORLD);
    let res = cfg.resolution;
    let n_rooms = rng.random_range(cfg.rooms_min..=cfg.rooms_max);
    let mut rooms: Vec<Room> = Vec::new();
    let mut doors: Vec<Door> = Vec::new();

    let span = |rng: &mut crate::rng::SeaRng, r: [f64; 2]| cells(rng.random_range(r[0]..=r[1]), res);
    let pick_type = |rng: &mut crate::rng::SeaRng| {
        cfg.room_type_weights.choose_weighted(rng, |(_, w)| *w).map(|(t, _)| *t).unwrap_or(RoomType::LivingRoom)
    };

    let (width, height, mut occ);
    if n_rooms == 1 {
        let (w, h) = (span(&mut rng, cfg.room_width_m), span(&mut rng, cfg.room_depth_m));
        width = w + 2;
        height = h + 2;
        occ = Grid::filled(width, height, true);
        let rect = Rect { x0: 1, y0: 1, w, h };
        open_rect(&mut occ, rect);
        rooms.push(Room { rect, room_type: pick_type(&mut rng) });
    } else {
        let side = n_rooms - 1;
        let top = side.div_ceil(2);
        let bottom = side - top;
        let row_widths = |rng: &mut crate::rng::SeaRng, k: usize| (0..k).map(|_| span(rng, cfg.room_width_m)).collect::<Vec<_>>();
        let mut top_w = row_widths(&mut rng, top);
        let mut bot_w = row_widths(&mut rng, bottom);
        let top_h = span(&mut rng, cfg.room_depth_m);
        let bot_h = if bottom > 0 { span(&mut rng, cfg.room_depth_m) } else { 0 };
        let hall_h = cells(cfg.hallway_width_m, res);
        let row_len = |w: &[usize]| if w.is_empty() { 0 } else { w.iter().sum::<usize>() + w.len() - 1 };
        let hall_w = row_len(&top_w).max(row_len(&bot_w));
        // stretch the last room of the shorter row so both rows span the hallway
        for row in [&mut top_w, &mut bot_w] {
            let len = row_len(row);
            if let Some(last) = row.last_mut() {
                *last += hall_w - len;
            }
        }
        width = hall_w + 2;
        let bottom_block = if bottom > 0 { bot_h + 1 } else { 0 };
        height = 1 + bottom_block + hall_h + 1 + top_h + 1;
        occ = Grid::filled(width, height, true);

        let hall_y0 = 1 + bottom_block as i64;
        let hall = Rect { x0: 1, y0: hall_y0, w: hall_w, h: hall_h };
        open_rect(&mut occ, hall);
        rooms.push(Room { rect: hall, room_type: RoomType::Hallway });

        // sorted types alternate between the rows so facing rooms share a zone
        let mut types: Vec<(f64, RoomType)> = (0..side)
            .map(|_| {
                let t = pick_type(&mut rng);
                let rank = cfg.zone_order.iter().position(|&z| z == t).unwrap_or(cfg.zone_order.len());
                (rank as f64 + cfg.zone_jitter * rng.random::<f64>(), t)
            })
            .collect();
        if !cfg.zone_order.is_empty() {
            types.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        let bot_types: Vec<RoomType> = types.iter().skip(1).step_by(2).map(|t| t.1).collect();
        let top_types: Vec<RoomType> = types.iter().step_by(2).map(|t| t.1).collect();

        let mut place_row =
            |widths: &[usize], kinds: &[RoomType], y0: i64, h: usize, wall_y: i64, rng: &mut crate::rng::SeaRng, occ: &mut Grid<bool>| {
                let mut x = 1i64;
                let first = rooms.len();
                for (&w, &room_type) in widths.iter().zip(kinds) {
                    let rect = Rect { x0: x, y0, w, h };
                    open_rect(occ, rect);
                    let idx = rooms.len();
                    rooms.push(Room { rect, room_type });
                    let dw = rng.random_range(cfg.door_cells[0]..=cfg.door_cells[1]).min(w - 2);
                    let dx = rng.random_range(1..=(w - dw - 1)) as i64;
                    let door = Rect { x0: x + dx, y0: wall_y, w: dw, h: 1 };
                    open_rect(occ, door);
                    doors.push(Door { rect: door, rooms: [idx, 0] });
                    x += w as i64 + 1;
                }
                for i in first..rooms.len().saturating_sub(1) {
                    let (a, b) = (&rooms[i], &rooms[i + 1]);
                    if rng.random_bool(cfg.link_p(a.room_type, b.room_type)) {
                        let dh = rng.random_range(cfg.door_cells[0]..=cfg.door_cells[1]).min(h - 2);
                        let dy = rng.random_range(1..=(h - dh - 1)) as i64;
                        let wall_x = a.rect.x0 + a.rect.w as i64;
                        let door = Rect { x0: wall_x, y0: y0 + dy, w: 1, h: dh };
                        open_rect(occ, door);
                        doors.push(Door { rect: door, rooms: [i, i + 1] });
                    }
                }
            };
        if bottom > 0 {
            place_row(&bot_w, &bot_types, 1, bot_h, 1 + bot_h as i64, &mut rng, &mut occ);
        }
        let top_y0 = hall_y0 + hall_h as i64 + 1;
        place_row(&top_w, &top_types, top_y0, top_h, top_y0 - 1, &mut rng, &mut occ);
    }

    let mut world = GridWorld::new(seed, res, occ, rooms, doors);
    place_objects(&mut world, cfg, &mut rng)?;
    if !world.is_connected() {
        return Err(SeaError::Generation { seed, reason: "free space is disconnected".into() });
    }
    Ok(world)
}

fn place_objects(world: &mut GridWorld, cfg: &HouseConfig, rng: &mut crate::rng::SeaRng) -> Result<()> {
    let n_rooms = world.rooms.len();
    let mut wanted: Vec<(usize, usize, bool)> = Vec::new();
    for r in 0..n_rooms {
        let t = world.rooms[r].room_type;
        for p in cfg.object_priors.iter().filter(|p| p.room == t) {
            if rng.random_bool(p.p) {
                wanted.push((r, p.category, false));
            }
        }
    }
    if n_rooms == 1 {
        // a lone room holds one of every goal category from its priors or,
        // failing that, the first goal category
        if !wanted.iter().any(|w| cfg.goal_categories.contains(&w.1)) {
            if let Some(&g) = cfg.goal_categories.first() {
                wanted.push((0, g, false));
            }
        }
    }
    for _ in 0..cfg.decoys {
        let Some(&cat) = cfg.goal_categories.choose(rng) else { break };
        // a room type whose prior for the category is zero
        let hosts: Vec<usize> = (0..n_rooms)
            .filter(|&r| !cfg.object_priors.iter().any(|p| p.category == cat && p.room == world.rooms[r].room_type && p.p > 0.0))
            .collect();
        if let Some(&r) = hosts.choose(rng) {
            wanted.push((r, cat, true));
        }
    }

    let seed = world.seed;
    for (room, category, decoy) in wanted {
        let rect = world.rooms[room].rect;
        let mut placed = false;
        for _ in 0..100 {
            if rect.w < 6 || rect.h < 6 {
                break;
            }
            let x = rect.x0 + rng.random_range(1..=(rect.w as i64 - 3));
            let y = rect.y0 + rng.random_range(1..=(rect.h as i64 - 3));
            let fp = Rect { x0: x, y0: y, w: 2, h: 2 };
            if world.footprint_ok(fp) {
                world.add_object(ObjectInstance {
                    id: world.objects.len(),
                    category,
                    footprint: fp,
                    room,
                    decoy,
                    proto_seed: crate::rng::derive(seed, 10_000 + world.objects.len() as u64),
                });
                if world.is_connected() {
                    placed = true;
                    break;
                }
                world.remove_last_object();
            }
        }
        if !placed {
            return Err(SeaError::Generation {
                seed,
                reason: format!("could not place {} in room {room} after 100 tries", CATEGORY_NAMES[category]),
            });
        }
    }
    Ok(())
}

/// Free cells reachable from `start` over 4-neighbours.
pub(crate) fn flood(occupied: &Grid<bool>, start: Cell) -> usize {
    let mut seen = Grid::filled(occupied.width(), occupied.height(), false);
    let mut q = VecDeque::from([start]);
    seen.set(start, true);
    let mut count = 0;
    while let Some(c) = q.pop_front() {
        count += 1;
        for (dx, dy) in NEIGHBORS4 {
            let nb = c.offset(dx, dy);
            if occupied.get(nb) == Some(&false) && seen.get(nb) == Some(&false) {
                seen.set(nb, true);
                q.push_back(nb);
            }
        }
    }
    count
}
