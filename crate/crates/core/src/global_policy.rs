//! Target place selection, object importance, directional subgoal candidates
//! and semantic paths over the reachability matrix.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::atlas::{Atlas, Conditional};
use crate::grid::Cell;
use crate::matrix::Matrix;

/// Floor on the entropy used for importance.
pub const ENTROPY_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Front,
    Left,
    Right,
}

impl Sector {
    pub const ALL: [Sector; 3] = [Sector::Front, Sector::Left, Sector::Right];

    /// Sector of a bearing in degrees, negative to the left of the heading.
    pub fn of_bearing(deg: f64) -> Option<Sector> {
        if (-60.0..-20.0).contains(&deg) {
            Some(Sector::Left)
        } else if (-20.0..=20.0).contains(&deg) {
            Some(Sector::Front)
        } else if deg > 20.0 && deg <= 60.0 {
            Some(Sector::Right)
        } else {
            None
        }
    }

    /// Center bearing in degrees, same convention as [`Sector::of_bearing`].
    pub fn center_deg(self) -> f64 {
        match self {
            Sector::Front => 0.0,
            Sector::Left => -40.0,
            Sector::Right => 40.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceWeighting {
    #[default]
    Posterior,
    Uniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub tie_break: TieBreak,
    pub importance_weighting: ImportanceWeighting,
    pub rng_seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { tie_break: TieBreak::LowestIndex, importance_weighting: ImportanceWeighting::Posterior, rng_seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStatus {
    Posterior,
    FallbackUniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetPlace {
    pub place: usize,
    pub status: TargetStatus,
}

/// Cluster most likely to hold `goal`. Ties go to the lowest index. An
/// unseen category falls back to a seeded uniform draw over clusters seen in
/// training.
pub fn target_place<R: Rng + ?Sized>(atlas: &Atlas, goal: usize, rng: &mut R) -> TargetPlace {
    match atlas.p_place_given_object(goal) {
        Conditional::Known(p) => TargetPlace { place: argmax(&p), status: TargetStatus::Posterior },
        Conditional::Unknown => {
            let mut pool = atlas.seen_places();
            if pool.is_empty() {
                pool = (0..atlas.n_places.max(1)).collect();
            }
            TargetPlace { place: *pool.choose(rng).expect("pool is non-empty"), status: TargetStatus::FallbackUniform }
        }
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Inverse entropy of each category's place distribution. Categories never
/// observed score 0.
pub fn object_importance(atlas: &Atlas, weighting: ImportanceWeighting) -> Vec<f64> {
    let rows: Vec<Option<Vec<f64>>> = (0..atlas.n_places).map(|i| atlas.p_object_given_place(i).known().map(<[f64]>::to_vec)).collect();
    (0..atlas.n_categories)
        .map(|j| {
            let Conditional::Known(post) = atlas.p_place_given_object(j) else {
                return 0.0;
            };
            let support: Vec<(usize, f64)> =
                rows.iter().enumerate().filter_map(|(i, r)| r.as_ref().map(|r| (i, r[j]))).filter(|&(_, p)| p > 0.0).collect();
            let h: f64 = support
                .iter()
                .map(|&(i, p)| {
                    let w = match weighting {
                        ImportanceWeighting::Posterior => post[i],
                        ImportanceWeighting::Uniform => 1.0 / support.len() as f64,
                    };
                    w * -p.ln()
                })
                .sum();
            1.0 / h.max(ENTROPY_FLOOR)
        })
        .collect()
}

/// Detection as seen by the global policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorDetection {
    pub category: usize,
    /// Degrees, negative to the left.
    pub bearing_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgoalCandidate {
    pub sector: Sector,
    pub anchor_object: Option<usize>,
    pub place: Option<usize>,
    pub world_cell: Option<Cell>,
    pub reachable: bool,
}

/// One candidate per sector, in [`Sector::ALL`] order.
pub fn subgoal_candidates(detections: &[SectorDetection], atlas: &Atlas, importance: &[f64]) -> Vec<SubgoalCandidate> {
    Sector::ALL
        .iter()
        .map(|&sector| {
            let mut best: Option<(usize, f64)> = None;
            for d in detections {
                if Sector::of_bearing(d.bearing_deg) != Some(sector) {
                    continue;
                }
                let imp = importance.get(d.category).copied().unwrap_or(0.0);
                let better = match best {
                    None => true,
                    Some((c, b)) => imp > b || (imp == b && d.category < c),
                };
                if better {
                    best = Some((d.category, imp));
                }
            }
            let anchor = best.map(|(c, _)| c);
            let place = anchor.and_then(|c| atlas.p_place_given_object(c).known().map(argmax));
            SubgoalCandidate {
                sector,
                // an anchor whose category has no statistics carries no place
                anchor_object: anchor.filter(|_| place.is_some()),
                place,
                world_cell: None,
                reachable: true,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticPath {
    pub clusters: Vec<usize>,
    pub cost: f64,
    pub product: f64,
}

impl SemanticPath {
    fn from_clusters(gamma: &Matrix<f64>, clusters: Vec<usize>) -> Self {
        let mut product = 1.0;
        let mut cost = 0.0;
        for w in clusters.windows(2) {
            let g = gamma[(w[0], w[1])];
            product *= g;
            cost += -g.ln();
        }
        Self { clusters, cost, product }
    }
}

/// Path between clusters maximizing the product of reachabilities, which is
/// the shortest path under `-ln gamma` edge weights. Labels are products so
/// that the float result is exactly the best left-fold product over simple
/// paths. Equal products resolve to the lexicographically smallest sequence.
pub fn semantic_shortest_path(gamma: &Matrix<f64>, src: usize, dst: usize) -> Option<SemanticPath> {
    let n = gamma.rows();
    if src >= n || dst >= n {
        return None;
    }
    let mut label: Vec<Option<(f64, Vec<usize>)>> = vec![None; n];
    let mut done = vec![false; n];
    label[src] = Some((1.0, vec![src]));
    loop {
        let mut pick: Option<usize> = None;
        for v in 0..n {
            let Some((p, path)) = label[v].as_ref().filter(|_| !done[v]) else {
                continue;
            };
            let better = match pick.and_then(|u| label[u].as_ref()) {
                None => true,
                Some((bp, bpath)) => *p > *bp || (*p == *bp && path < bpath),
            };
            if better {
                pick = Some(v);
            }
        }
        let u = pick?;
        done[u] = true;
        if u == dst {
            let (_, path) = label[u].take()?;
            return Some(SemanticPath::from_clusters(gamma, path));
        }
        let (pu, path_u) = label[u].clone()?;
        for v in 0..n {
            let g = gamma[(u, v)];
            if done[v] || v == u || g <= 0.0 {
                continue;
            }
            let cand = pu * g;
            let mut cand_path = path_u.clone();
            cand_path.push(v);
            let better = match &label[v] {
                None => true,
                Some((p, path)) => cand > *p || (cand == *p && cand_path < *path),
            };
            if better {
                label[v] = Some((cand, cand_path));
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Semantic,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgoalChoice {
    pub index: usize,
    pub sector: Sector,
    pub path: Option<SemanticPath>,
    pub mode: SelectionMode,
}

/// Picks the candidate whose place has the most reachable semantic path to
/// `k_star`. Unreachable candidates are dropped first. A candidate already in
/// `k_star` scores 1. Falls back to a seeded uniform sector choice when the
/// scored candidates do not discriminate between places.
pub fn select_subgoal<R: Rng + ?Sized>(candidates: &[SubgoalCandidate], gamma: &Matrix<f64>, k_star: usize, rng: &mut R) -> SubgoalChoice {
    let mut scored: Vec<(usize, SemanticPath)> = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if !c.reachable || c.anchor_object.is_none() {
            continue;
        }
        let Some(place) = c.place else { continue };
        if let Some(p) = semantic_shortest_path(gamma, place, k_star) {
            scored.push((i, p));
        }
    }
    let distinct = {
        let mut places: Vec<usize> = scored.iter().filter_map(|(i, _)| candidates[*i].place).collect();
        places.sort_unstable();
        places.dedup();
        places.len()
    };
    if scored.is_empty() || (scored.len() > 1 && distinct == 1) {
        return random_choice(candidates, rng);
    }
    let mut best = 0;
    for (k, (_, p)) in scored.iter().enumerate() {
        if p.product > scored[best].1.product {
            best = k;
        }
    }
    let (index, path) = scored.swap_remove(best);
    SubgoalChoice { index, sector: candidates[index].sector, path: Some(path), mode: SelectionMode::Semantic }
}

/// Uniform sector choice over reachable candidates, or over all of them when
/// none is reachable.
pub fn random_choice<R: Rng + ?Sized>(candidates: &[SubgoalCandidate], rng: &mut R) -> SubgoalChoice {
    let mut pool: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].reachable).collect();
    if pool.is_empty() {
        pool = (0..candidates.len()).collect();
    }
    let index = pool.choose(rng).copied().unwrap_or(0);
    SubgoalChoice { index, sector: candidates.get(index).map_or(Sector::Front, |c| c.sector), path: None, mode: SelectionMode::Random }
}
