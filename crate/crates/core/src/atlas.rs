//! Cross-scene place reachability and place-object statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeaError};
use crate::matrix::Matrix;
use crate::sgm::SemanticGraphMap;
use crate::SCHEMA_VERSION;

/// Fraction of `max(R)` applied by one relation update.
pub const UPDATE_RATE: f64 = 0.1;

/// Per-scene partial statistics. Merging summaries in any order gives the
/// same atlas.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSummary {
    pub presence: Vec<bool>,
    /// `connected[(i, j)]` is true when the scene links clusters i and j.
    pub connected: Matrix<bool>,
    pub place_object: Matrix<f64>,
}

impl SceneSummary {
    pub fn from_sgm(sgm: &SemanticGraphMap) -> Result<Self> {
        let n_p = sgm.n_places();
        let mut presence = vec![false; n_p];
        for n in sgm.image_nodes() {
            presence[n.place_cluster] = true;
        }
        let ac = sgm.connectivity_matrix();
        let mut connected = ac.map(|&v| v > 0);
        for i in 0..n_p {
            connected[(i, i)] = false;
        }
        let place_object = sgm.place_object_matrix(&sgm.a_oc())?.map(|&v| v as f64);
        Ok(Self { presence, connected, place_object })
    }

    pub fn n_places(&self) -> usize {
        self.presence.len()
    }

    /// Folds another traversal of the same scene into this summary.
    pub fn absorb(&mut self, other: &SceneSummary) -> Result<()> {
        if other.presence.len() != self.presence.len() || other.place_object.shape() != self.place_object.shape() {
            return Err(SeaError::invalid("summaries disagree on cluster or category count"));
        }
        for (a, b) in self.presence.iter_mut().zip(&other.presence) {
            *a |= *b;
        }
        let n = self.n_places();
        for i in 0..n {
            for j in 0..n {
                self.connected[(i, j)] |= other.connected[(i, j)];
            }
            for j in 0..self.place_object.cols() {
                self.place_object[(i, j)] += other.place_object[(i, j)];
            }
        }
        Ok(())
    }
}

/// Distribution returned by the conditional queries. `Unknown` marks a
/// zero row or column, which callers must handle explicitly.
#[derive(Clone, Debug, PartialEq)]
pub enum Conditional {
    Known(Vec<f64>),
    Unknown,
}

impl Conditional {
    pub fn known(&self) -> Option<&[f64]> {
        match self {
            Conditional::Known(v) => Some(v),
            Conditional::Unknown => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RelationKind {
    ObservedConnection { place: usize, category: usize },
    TargetNotFound { place: usize, category: usize },
    PlaceLink { a: usize, b: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEvent {
    #[serde(flatten)]
    pub kind: RelationKind,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atlas {
    pub n_places: usize,
    pub n_categories: usize,
    pub n_scenes: usize,
    pub gamma: Matrix<f64>,
    pub r: Matrix<f64>,
    pub presence: Vec<Vec<bool>>,
}

/// Reachability from per-scene summaries.
pub fn gamma_from_summaries(summaries: &[SceneSummary]) -> Result<Matrix<f64>> {
    let first = summaries.first().ok_or_else(|| SeaError::invalid("no scenes to aggregate"))?;
    let n = first.n_places();
    let mut num = Matrix::<u64>::zeros(n, n);
    let mut den = Matrix::<u64>::zeros(n, n);
    for s in summaries {
        if s.n_places() != n || s.connected.shape() != (n, n) {
            return Err(SeaError::invalid("scene summaries disagree on cluster count"));
        }
        for i in 0..n {
            for j in 0..n {
                if s.presence[i] && s.presence[j] {
                    den[(i, j)] += 1;
                    if s.connected[(i, j)] {
                        num[(i, j)] += 1;
                    }
                }
            }
        }
    }
    let mut gamma = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && den[(i, j)] > 0 {
                gamma[(i, j)] = num[(i, j)] as f64 / den[(i, j)] as f64;
            }
        }
    }
    Ok(gamma)
}

pub fn aggregate_reachability(sgms: &[SemanticGraphMap]) -> Result<Matrix<f64>> {
    let summaries = sgms.iter().map(SceneSummary::from_sgm).collect::<Result<Vec<_>>>()?;
    gamma_from_summaries(&summaries)
}

/// Sum of per-scene place-object counts. Each map supplies its own one-hot
/// category matrix; all maps must share the cluster and category sets.
pub fn aggregate_place_object(sgms: &[SemanticGraphMap]) -> Result<Matrix<f64>> {
    let first = sgms.first().ok_or_else(|| SeaError::invalid("no scenes to aggregate"))?;
    let (n_p, n_c) = (first.n_places(), first.n_categories());
    let mut r = Matrix::zeros(n_p, n_c);
    for g in sgms {
        if (g.n_places(), g.n_categories()) != (n_p, n_c) {
            return Err(SeaError::invalid("maps disagree on cluster or category count"));
        }
        let po = g.place_object_matrix(&g.a_oc())?;
        for i in 0..n_p {
            for j in 0..n_c {
                r[(i, j)] += po[(i, j)] as f64;
            }
        }
    }
    Ok(r)
}

fn normalize(values: Vec<f64>) -> Conditional {
    let total: f64 = values.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Conditional::Unknown;
    }
    Conditional::Known(values.into_iter().map(|v| v / total).collect())
}

impl Atlas {
    pub fn from_summaries(summaries: &[SceneSummary]) -> Result<Self> {
        let gamma = gamma_from_summaries(summaries)?;
        let n_p = gamma.rows();
        let n_c = summaries[0].place_object.cols();
        let mut r = Matrix::zeros(n_p, n_c);
        for s in summaries {
            if s.place_object.shape() != (n_p, n_c) {
                return Err(SeaError::invalid("scene summaries disagree on category count"));
            }
            for i in 0..n_p {
                for j in 0..n_c {
                    r[(i, j)] += s.place_object[(i, j)];
                }
            }
        }
        Ok(Self {
            n_places: n_p,
            n_categories: n_c,
            n_scenes: summaries.len(),
            gamma,
            r,
            presence: summaries.iter().map(|s| s.presence.clone()).collect(),
        })
    }

    pub fn from_sgms(sgms: &[SemanticGraphMap]) -> Result<Self> {
        let summaries = sgms.iter().map(SceneSummary::from_sgm).collect::<Result<Vec<_>>>()?;
        Self::from_summaries(&summaries)
    }

    /// Clusters observed in at least one training scene.
    pub fn seen_places(&self) -> Vec<usize> {
        (0..self.n_places).filter(|&i| self.presence.iter().any(|p| p[i])).collect()
    }

    pub fn p_place_given_object(&self, category: usize) -> Conditional {
        if category >= self.n_categories {
            return Conditional::Unknown;
        }
        normalize((0..self.n_places).map(|i| self.r[(i, category)]).collect())
    }

    pub fn p_object_given_place(&self, place: usize) -> Conditional {
        if place >= self.n_places {
            return Conditional::Unknown;
        }
        normalize(self.r.row(place).to_vec())
    }

    /// Current update step size.
    pub fn delta(&self) -> f64 {
        UPDATE_RATE * self.r.max_value()
    }

    /// Applies one in-episode relation update. Run it on a working copy; the
    /// prior must stay untouched.
    pub fn update_relation(&mut self, event: &RelationEvent) -> Result<()> {
        let delta = self.delta();
        match event.kind {
            RelationKind::ObservedConnection { place, category } => {
                self.check_pc(place, category)?;
                self.r[(place, category)] += delta;
            }
            RelationKind::TargetNotFound { place, category } => {
                self.check_pc(place, category)?;
                let v = &mut self.r[(place, category)];
                *v = (*v - delta).max(0.0);
            }
            RelationKind::PlaceLink { a, b } => {
                if a >= self.n_places || b >= self.n_places {
                    return Err(SeaError::invalid(format!("place link ({a},{b}) out of range")));
                }
                if a != b {
                    let eps = 1.0 / self.n_scenes.max(1) as f64;
                    let v = self.gamma[(a, b)].max(eps);
                    self.gamma[(a, b)] = v;
                    self.gamma[(b, a)] = v;
                }
            }
        }
        Ok(())
    }

    fn check_pc(&self, place: usize, category: usize) -> Result<()> {
        if place >= self.n_places || category >= self.n_categories {
            return Err(SeaError::invalid(format!("relation ({place},{category}) outside {}x{}", self.n_places, self.n_categories)));
        }
        Ok(())
    }

    pub fn check_invariants(&self) -> Result<()> {
        let n = self.n_places;
        if self.gamma.shape() != (n, n) || self.r.shape() != (n, self.n_categories) {
            return Err(SeaError::ContractViolation("atlas matrix shapes".into()));
        }
        for i in 0..n {
            if self.gamma[(i, i)] != 0.0 {
                return Err(SeaError::ContractViolation(format!("gamma[{i},{i}] nonzero")));
            }
            for j in 0..n {
                let g = self.gamma[(i, j)];
                if !(0.0..=1.0).contains(&g) || g != self.gamma[(j, i)] {
                    return Err(SeaError::ContractViolation(format!("gamma[{i},{j}] = {g}")));
                }
            }
        }
        if self.r.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(SeaError::ContractViolation("R has negative or non-finite entries".into()));
        }
        if self.presence.len() != self.n_scenes || self.presence.iter().any(|p| p.len() != n) {
            return Err(SeaError::ContractViolation("presence table shape".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct AtlasFile {
    schema_version: u32,
    n_p: usize,
    n_c: usize,
    n_scenes: usize,
    gamma: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    presence: Vec<Vec<u8>>,
}

fn rows_or_empty(rows: Vec<Vec<f64>>, n: usize, m: usize) -> std::result::Result<Matrix<f64>, String> {
    if rows.len() != n || rows.iter().any(|r| r.len() != m) {
        return Err(format!("expected {n}x{m} matrix"));
    }
    if n == 0 || m == 0 {
        return Ok(Matrix::zeros(n, m));
    }
    Matrix::from_rows(rows).map_err(|e| e.to_string())
}

impl Serialize for Atlas {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = |m: &Matrix<f64>, n: usize| (0..n).map(|i| m.row(i).to_vec()).collect();
        AtlasFile {
            schema_version: SCHEMA_VERSION,
            n_p: self.n_places,
            n_c: self.n_categories,
            n_scenes: self.n_scenes,
            gamma: rows(&self.gamma, self.n_places),
            r: rows(&self.r, self.n_places),
            presence: self.presence.iter().map(|p| p.iter().map(|&b| u8::from(b)).collect()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Atlas {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let f = AtlasFile::deserialize(d)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(D::Error::custom(format!("unsupported atlas schema {}", f.schema_version)));
        }
        let atlas = Atlas {
            n_places: f.n_p,
            n_categories: f.n_c,
            n_scenes: f.n_scenes,
            gamma: rows_or_empty(f.gamma, f.n_p, f.n_p).map_err(D::Error::custom)?,
            r: rows_or_empty(f.r, f.n_p, f.n_c).map_err(D::Error::custom)?,
            presence: f.presence.iter().map(|p| p.iter().map(|&b| b != 0).collect()).collect(),
        };
        atlas.check_invariants().map_err(D::Error::custom)?;
        Ok(atlas)
    }
}
