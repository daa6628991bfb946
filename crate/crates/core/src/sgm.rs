//! Per-episode semantic graph map: image nodes linked by traversal, object
//! nodes linked to the image nodes they were seen from, and the place
//! cluster membership of every image node.

use std::cell::Cell as FlagCell;
use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeaError};
use crate::features::{unit_sim, ClusterModel, FeatureVec};
use crate::matrix::Matrix;
use crate::SCHEMA_VERSION;

/// Similarity threshold for re-identifying image nodes.
pub const IMAGE_THRESHOLD: f64 = 0.8;
/// Similarity threshold for re-identifying object nodes.
pub const OBJECT_THRESHOLD: f64 = 0.8;

thread_local! {
    static POLICY_SCOPE: FlagCell<bool> = const { FlagCell::new(false) };
}

/// Runs `f` with the policy guard raised: reading any node's debug pose
/// inside panics. Policies are evaluated under this guard.
pub fn with_policy_guard<T>(f: impl FnOnce() -> T) -> T {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            POLICY_SCOPE.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(POLICY_SCOPE.with(|g| g.replace(true)));
    f()
}

pub fn policy_guard_active() -> bool {
    POLICY_SCOPE.with(FlagCell::get)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageNode {
    pub id: usize,
    pub feature: FeatureVec,
    pub place_cluster: usize,
    pub last_update_step: usize,
    debug_pose: [f64; 2],
}

impl ImageNode {
    /// World position where the node was created. Visualization and
    /// evaluation only.
    pub fn debug_pose(&self) -> [f64; 2] {
        assert!(!policy_guard_active(), "debug pose of image node {} read inside a policy", self.id);
        self.debug_pose
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: usize,
    pub feature: FeatureVec,
    pub category: usize,
    pub detection_score: f64,
}

/// Detection handed to [`SemanticGraphMap::register_objects`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectObservation {
    pub feature: FeatureVec,
    pub category: usize,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphUpdate {
    pub node: usize,
    pub was_new: bool,
    /// Image edge added by this update, as `(min, max)`.
    pub new_edge: Option<(usize, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegisterCounts {
    pub added: usize,
    pub updated: usize,
    pub matched: usize,
    pub skipped: usize,
    pub added_ids: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticGraphMap {
    n_places: usize,
    n_categories: usize,
    clusters_ref: String,
    image_nodes: Vec<ImageNode>,
    object_nodes: Vec<ObjectNode>,
    im_edges: BTreeSet<(usize, usize)>,
    io_edges: BTreeSet<(usize, usize)>,
    current: Option<usize>,
}

/// Nearest place cluster by cosine similarity, lowest index on ties.
pub fn assign_place(feature: &FeatureVec, clusters: &ClusterModel) -> Result<usize> {
    clusters.nearest(feature).map(|(k, _)| k)
}

impl SemanticGraphMap {
    pub fn new(n_places: usize, n_categories: usize) -> Self {
        Self {
            n_places,
            n_categories,
            clusters_ref: String::new(),
            image_nodes: Vec::new(),
            object_nodes: Vec::new(),
            im_edges: BTreeSet::new(),
            io_edges: BTreeSet::new(),
            current: None,
        }
    }

    pub fn with_clusters_ref(mut self, r: impl Into<String>) -> Self {
        self.clusters_ref = r.into();
        self
    }

    pub fn n_places(&self) -> usize {
        self.n_places
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn image_nodes(&self) -> &[ImageNode] {
        &self.image_nodes
    }

    pub fn object_nodes(&self) -> &[ObjectNode] {
        &self.object_nodes
    }

    pub fn image_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.im_edges.iter().copied()
    }

    pub fn object_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.io_edges.iter().copied()
    }

    pub fn current_node(&self) -> Option<usize> {
        self.current
    }

    pub fn is_empty(&self) -> bool {
        self.image_nodes.is_empty()
    }

    pub fn has_image_edge(&self, a: usize, b: usize) -> bool {
        self.im_edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn has_object_edge(&self, image: usize, object: usize) -> bool {
        self.io_edges.contains(&(image, object))
    }

    /// Objects linked to image node `image`.
    pub fn objects_of(&self, image: usize) -> impl Iterator<Item = &ObjectNode> + '_ {
        self.io_edges.range((image, 0)..(image + 1, 0)).map(move |&(_, o)| &self.object_nodes[o])
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.image_nodes.len()];
        for &(a, b) in &self.im_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Hop distances from `src` over the image graph; `None` when unreachable.
    pub fn hop_distances(&self, src: usize) -> Vec<Option<usize>> {
        let adj = self.neighbors();
        let mut dist = vec![None; self.image_nodes.len()];
        if src >= dist.len() {
            return dist;
        }
        dist[src] = Some(0);
        let mut q = VecDeque::from([src]);
        while let Some(u) = q.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    q.push_back(v);
                }
            }
        }
        dist
    }

    fn add_edge(&mut self, a: usize, b: usize) -> Option<(usize, usize)> {
        if a == b {
            return None;
        }
        let e = (a.min(b), a.max(b));
        self.im_edges.insert(e).then_some(e)
    }

    /// Integrates one panoramic observation into the image graph.
    pub fn update_graph(
        &mut self,
        image_feature: &FeatureVec,
        place_feature: &FeatureVec,
        clusters: &ClusterModel,
        step: usize,
        debug_pose: [f64; 2],
    ) -> Result<GraphUpdate> {
        let mut image = image_feature.clone();
        image.normalize()?;
        if let Some(first) = self.image_nodes.first() {
            if first.feature.dim() != image.dim() {
                return Err(SeaError::DimensionMismatch { expected: first.feature.dim(), got: image.dim() });
            }
        }

        let Some(prev) = self.current else {
            let node = self.push_node(image, place_feature, clusters, step, debug_pose)?;
            self.current = Some(node);
            return Ok(GraphUpdate { node, was_new: true, new_edge: None });
        };

        if unit_sim(&self.image_nodes[prev].feature, &image) >= IMAGE_THRESHOLD {
            self.image_nodes[prev].last_update_step = step;
            return Ok(GraphUpdate { node: prev, was_new: false, new_edge: None });
        }

        let best = self
            .image_nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (i, unit_sim(&n.feature, &image)))
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });

        if best.1 >= IMAGE_THRESHOLD {
            let node = best.0;
            let n = &mut self.image_nodes[node];
            n.feature = image;
            n.last_update_step = step;
            let new_edge = self.add_edge(prev, node);
            self.current = Some(node);
            return Ok(GraphUpdate { node, was_new: false, new_edge });
        }

        let node = self.push_node(image, place_feature, clusters, step, debug_pose)?;
        let new_edge = self.add_edge(prev, node);
        self.current = Some(node);
        Ok(GraphUpdate { node, was_new: true, new_edge })
    }

    fn push_node(
        &mut self,
        feature: FeatureVec,
        place_feature: &FeatureVec,
        clusters: &ClusterModel,
        step: usize,
        debug_pose: [f64; 2],
    ) -> Result<usize> {
        let place_cluster = assign_place(place_feature, clusters)?;
        if place_cluster >= self.n_places {
            return Err(SeaError::invalid(format!("cluster {place_cluster} outside map with {} places", self.n_places)));
        }
        let id = self.image_nodes.len();
        self.image_nodes.push(ImageNode { id, feature, place_cluster, last_update_step: step, debug_pose });
        Ok(id)
    }

    /// Adds or re-identifies detected objects and links them to `at_node`.
    pub fn register_objects(&mut self, detections: &[ObjectObservation], at_node: usize) -> Result<RegisterCounts> {
        if at_node >= self.image_nodes.len() {
            return Err(SeaError::invalid(format!("image node {at_node} does not exist")));
        }
        let mut counts = RegisterCounts::default();
        for det in detections {
            if det.category >= self.n_categories {
                counts.skipped += 1;
                continue;
            }
            let mut feature = det.feature.clone();
            if feature.normalize().is_err() {
                counts.skipped += 1;
                continue;
            }
            let score = det.score.clamp(0.0, 1.0);
            let found = self
                .object_nodes
                .iter()
                .filter(|o| o.category == det.category && o.feature.dim() == feature.dim())
                .map(|o| (o.id, unit_sim(&o.feature, &feature)))
                .filter(|&(_, s)| s > OBJECT_THRESHOLD)
                .fold(None::<(usize, f64)>, |acc, x| match acc {
                    Some(a) if a.1 >= x.1 => Some(a),
                    _ => Some(x),
                });
            let id = match found {
                Some((id, _)) => {
                    let o = &mut self.object_nodes[id];
                    if score > o.detection_score {
                        o.feature = feature;
                        o.detection_score = score;
                        counts.updated += 1;
                    } else {
                        counts.matched += 1;
                    }
                    id
                }
                None => {
                    let id = self.object_nodes.len();
                    self.object_nodes.push(ObjectNode { id, feature, category: det.category, detection_score: score });
                    counts.added += 1;
                    counts.added_ids.push(id);
                    id
                }
            };
            self.io_edges.insert((at_node, id));
        }
        Ok(counts)
    }

    pub fn a_im(&self) -> Matrix<u64> {
        let n = self.image_nodes.len();
        let mut m = Matrix::zeros(n, n);
        for &(a, b) in &self.im_edges {
            m[(a, b)] = 1;
            m[(b, a)] = 1;
        }
        m
    }

    pub fn a_io(&self) -> Matrix<u64> {
        let mut m = Matrix::zeros(self.image_nodes.len(), self.object_nodes.len());
        for &(i, o) in &self.io_edges {
            m[(i, o)] = 1;
        }
        m
    }

    pub fn a_pi(&self) -> Matrix<u64> {
        let mut m = Matrix::zeros(self.n_places, self.image_nodes.len());
        for n in &self.image_nodes {
            m[(n.place_cluster, n.id)] = 1;
        }
        m
    }

    /// One-hot object-to-category matrix for this map's object nodes.
    pub fn a_oc(&self) -> Matrix<u64> {
        let mut m = Matrix::zeros(self.object_nodes.len(), self.n_categories);
        for o in &self.object_nodes {
            m[(o.id, o.category)] = 1;
        }
        m
    }

    /// Place-to-place connection counts `A_pi A_im A_pi^T`.
    pub fn connectivity_matrix(&self) -> Matrix<u64> {
        let a_pi = self.a_pi();
        a_pi.matmul(&self.a_im()).and_then(|m| m.matmul(&a_pi.transpose())).expect("shapes are consistent by construction")
    }

    /// Place-to-category link counts `A_pi A_io A_oc`.
    pub fn place_object_matrix(&self, a_oc: &Matrix<u64>) -> Result<Matrix<u64>> {
        if a_oc.rows() != self.object_nodes.len() {
            return Err(SeaError::invalid(format!("A_oc has {} rows for {} object nodes", a_oc.rows(), self.object_nodes.len())));
        }
        for r in 0..a_oc.rows() {
            if a_oc.row(r).iter().sum::<u64>() != 1 {
                return Err(SeaError::invalid(format!("A_oc row {r} is not one-hot")));
            }
        }
        self.a_pi().matmul(&self.a_io())?.matmul(a_oc)
    }

    pub fn check_invariants(&self) -> Result<()> {
        for &(a, b) in &self.im_edges {
            if a >= b || b >= self.image_nodes.len() {
                return Err(SeaError::ContractViolation(format!("bad image edge ({a},{b})")));
            }
        }
        for n in &self.image_nodes {
            if n.place_cluster >= self.n_places {
                return Err(SeaError::ContractViolation(format!("image node {} has cluster {}", n.id, n.place_cluster)));
            }
        }
        let mut linked = vec![false; self.object_nodes.len()];
        for &(i, o) in &self.io_edges {
            if i >= self.image_nodes.len() || o >= self.object_nodes.len() {
                return Err(SeaError::ContractViolation(format!("bad object edge ({i},{o})")));
            }
            linked[o] = true;
        }
        if let Some(o) = linked.iter().position(|l| !l) {
            return Err(SeaError::ContractViolation(format!("object node {o} has no image link")));
        }
        for o in &self.object_nodes {
            if o.category >= self.n_categories || !(0.0..=1.0).contains(&o.detection_score) {
                return Err(SeaError::ContractViolation(format!("object node {} invalid", o.id)));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SgmFile {
    schema_version: u32,
    clusters_ref: String,
    n_places: usize,
    n_categories: usize,
    image_nodes: Vec<ImageNodeFile>,
    object_nodes: Vec<ObjectNode>,
    a_im: Vec<[usize; 2]>,
    a_io: Vec<[usize; 2]>,
    a_pi: Vec<usize>,
    #[serde(default)]
    current_node: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct ImageNodeFile {
    id: usize,
    feature: FeatureVec,
    last_update_step: usize,
    debug_pose: [f64; 2],
}

impl Serialize for SemanticGraphMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SgmFile {
            schema_version: SCHEMA_VERSION,
            clusters_ref: self.clusters_ref.clone(),
            n_places: self.n_places,
            n_categories: self.n_categories,
            image_nodes: self
                .image_nodes
                .iter()
                .map(|n| ImageNodeFile {
                    id: n.id,
                    feature: n.feature.clone(),
                    last_update_step: n.last_update_step,
                    debug_pose: n.debug_pose,
                })
                .collect(),
            object_nodes: self.object_nodes.clone(),
            a_im: self.im_edges.iter().map(|&(a, b)| [a, b]).collect(),
            a_io: self.io_edges.iter().map(|&(a, b)| [a, b]).collect(),
            a_pi: self.image_nodes.iter().map(|n| n.place_cluster).collect(),
            current_node: self.current,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SemanticGraphMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let f = SgmFile::deserialize(d)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(D::Error::custom(format!("unsupported sgm schema {}", f.schema_version)));
        }
        if f.a_pi.len() != f.image_nodes.len() {
            return Err(D::Error::custom("a_pi must assign every image node"));
        }
        let image_nodes = f
            .image_nodes
            .into_iter()
            .zip(&f.a_pi)
            .enumerate()
            .map(|(i, (n, &c))| {
                if n.id != i {
                    return Err(D::Error::custom("image node ids must be dense"));
                }
                Ok(ImageNode {
                    id: n.id,
                    feature: n.feature,
                    place_cluster: c,
                    last_update_step: n.last_update_step,
                    debug_pose: n.debug_pose,
                })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let map = SemanticGraphMap {
            n_places: f.n_places,
            n_categories: f.n_categories,
            clusters_ref: f.clusters_ref,
            image_nodes,
            object_nodes: f.object_nodes,
            im_edges: f.a_im.iter().map(|&[a, b]| (a.min(b), a.max(b))).collect(),
            io_edges: f.a_io.iter().map(|&[a, b]| (a, b)).collect(),
            current: f.current_node,
        };
        map.check_invariants().map_err(D::Error::custom)?;
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn clusters(k: usize, dim: usize) -> ClusterModel {
        ClusterModel::new((0..k).map(|i| FeatureVec::basis(dim, i)).collect()).unwrap()
    }

    fn feat_with_sim(base: &FeatureVec, other: &FeatureVec, sim: f64) -> FeatureVec {
        // base and other orthonormal
        let s = (1.0 - sim * sim).sqrt();
        FeatureVec::normalized(base.as_slice().iter().zip(other.as_slice()).map(|(a, b)| sim * a + s * b).collect()).unwrap()
    }

    #[test]
    fn assign_place_rules() {
        let c = clusters(10, 10);
        assert_eq!(assign_place(&FeatureVec::basis(10, 7), &c).unwrap(), 7);
        let mut v = vec![0.0; 10];
        v[2] = 1.0;
        v[5] = 1.0;
        assert_eq!(assign_place(&FeatureVec::from_raw(v), &c).unwrap(), 2);

        let mut rng = seeded(2);
        let c = ClusterModel::new((0..12).map(|_| FeatureVec::random_unit(6, &mut rng)).collect()).unwrap();
        for _ in 0..200 {
            let f = FeatureVec::random_unit(6, &mut rng);
            let brute = (0..12)
                .max_by(|&a, &b| {
                    let sa = crate::features::cosine_sim(&f, &c.centroids[a]).unwrap();
                    let sb = crate::features::cosine_sim(&f, &c.centroids[b]).unwrap();
                    sa.partial_cmp(&sb).unwrap().then(b.cmp(&a))
                })
                .unwrap();
            assert_eq!(assign_place(&f, &c).unwrap(), brute);
        }
        let empty = ClusterModel { schema_version: 1, k: 0, dim: 6, centroids: vec![], inertia: 0.0 };
        assert!(assign_place(&FeatureVec::basis(6, 0), &empty).is_err());
    }

    #[test]
    fn first_observation_creates_node() {
        let c = clusters(4, 4);
        let mut g = SemanticGraphMap::new(4, 3);
        let up = g.update_graph(&FeatureVec::basis(8, 0), &FeatureVec::basis(4, 1), &c, 0, [0.0, 0.0]).unwrap();
        assert!(up.was_new);
        assert_eq!(g.image_nodes().len(), 1);
        assert_eq!(g.image_edges().count(), 0);
        let a_pi = g.a_pi();
        assert_eq!((0..4).map(|p| a_pi[(p, 0)]).sum::<u64>(), 1);
        assert_eq!(a_pi[(1, 0)], 1);
    }

    #[test]
    fn graph_rule_fixture() {
        let c = clusters(4, 4);
        let place = FeatureVec::basis(4, 0);
        let e0 = FeatureVec::basis(8, 0);
        let e1 = FeatureVec::basis(8, 1);
        let e2 = FeatureVec::basis(8, 2);
        let mut g = SemanticGraphMap::new(4, 3);
        g.update_graph(&e0, &place, &c, 0, [0.0, 0.0]).unwrap();

        // sim 0.5 to node 0 -> new node, linked
        let f1 = feat_with_sim(&e0, &e1, 0.5);
        let up = g.update_graph(&f1, &place, &c, 1, [1.0, 0.0]).unwrap();
        assert!(up.was_new);
        assert_eq!(g.image_nodes().len(), 2);
        let a = g.a_im();
        assert_eq!((a[(0, 1)], a[(1, 0)]), (1, 1));

        // sim 0.95 to node 0 and well below threshold to node 1
        let f2 = feat_with_sim(&e0, &e2, 0.95);
        let s1 = crate::features::cosine_sim(&f2, &g.image_nodes()[1].feature).unwrap();
        assert!(s1 < 0.8);
        let up = g.update_graph(&f2, &place, &c, 2, [0.1, 0.0]).unwrap();
        assert!(!up.was_new);
        assert_eq!(up.node, 0);
        assert_eq!(g.image_nodes().len(), 2);
        assert_eq!(g.image_nodes()[0].feature, f2);
        assert!(g.has_image_edge(0, 1));
        assert_eq!(g.current_node(), Some(0));
    }

    #[test]
    fn repeated_observation_is_idempotent() {
        let c = clusters(4, 4);
        let mut g = SemanticGraphMap::new(4, 3);
        let mut rng = seeded(5);
        for step in 0..10 {
            let f = FeatureVec::random_unit(16, &mut rng);
            g.update_graph(&f, &FeatureVec::basis(4, step % 4), &c, step, [0.0, 0.0]).unwrap();
            let snapshot = (g.image_nodes().len(), g.image_edges().count());
            let up = g.update_graph(&f, &FeatureVec::basis(4, 0), &c, step, [0.0, 0.0]).unwrap();
            assert!(!up.was_new && up.new_edge.is_none());
            assert_eq!(snapshot, (g.image_nodes().len(), g.image_edges().count()));
        }
    }

    #[test]
    fn object_registration_rules() {
        let c = clusters(2, 2);
        let mut g = SemanticGraphMap::new(2, 5);
        g.update_graph(&FeatureVec::basis(4, 0), &FeatureVec::basis(2, 0), &c, 0, [0.0; 2]).unwrap();
        let x = FeatureVec::basis(8, 0);
        let counts = g.register_objects(&[ObjectObservation { feature: x.clone(), category: 3, score: 0.8 }], 0).unwrap();
        assert_eq!(counts.added, 1);
        assert!(g.has_object_edge(0, 0));

        let near = feat_with_sim(&x, &FeatureVec::basis(8, 1), 0.9);
        let counts = g.register_objects(&[ObjectObservation { feature: near.clone(), category: 3, score: 0.6 }], 0).unwrap();
        assert_eq!((counts.added, counts.matched, counts.updated), (0, 1, 0));
        assert_eq!(g.object_nodes()[0].feature, x);

        let counts = g.register_objects(&[ObjectObservation { feature: near.clone(), category: 3, score: 0.95 }], 0).unwrap();
        assert_eq!(counts.updated, 1);
        assert_eq!(g.object_nodes()[0].feature, near);

        let counts = g.register_objects(&[ObjectObservation { feature: near, category: 1, score: 0.9 }], 0).unwrap();
        assert_eq!(counts.added, 1);
        assert_eq!(g.object_nodes().len(), 2);

        let counts = g.register_objects(&[ObjectObservation { feature: x, category: 9, score: 0.9 }], 0).unwrap();
        assert_eq!(counts.skipped, 1);
        assert!(g.register_objects(&[], 7).is_err());
    }

    #[test]
    fn connectivity_fixtures() {
        let c = clusters(8, 8);
        let mut g = SemanticGraphMap::new(8, 4);
        g.update_graph(&FeatureVec::basis(4, 0), &FeatureVec::basis(8, 3), &c, 0, [0.0; 2]).unwrap();
        assert!(g.connectivity_matrix().iter().all(|&v| v == 0));
        g.update_graph(&FeatureVec::basis(4, 1), &FeatureVec::basis(8, 7), &c, 1, [0.0; 2]).unwrap();
        let ac = g.connectivity_matrix();
        assert_eq!((ac[(3, 7)], ac[(7, 3)]), (1, 1));
        assert_eq!(ac.iter().sum::<u64>(), 2);
    }

    #[test]
    fn place_object_fixtures() {
        let c = clusters(6, 6);
        let mut g = SemanticGraphMap::new(6, 4);
        g.update_graph(&FeatureVec::basis(4, 0), &FeatureVec::basis(6, 5), &c, 0, [0.0; 2]).unwrap();
        assert!(g.place_object_matrix(&g.a_oc()).unwrap().iter().all(|&v| v == 0));
        let obj = ObjectObservation { feature: FeatureVec::basis(3, 0), category: 2, score: 0.9 };
        g.register_objects(std::slice::from_ref(&obj), 0).unwrap();
        let po = g.place_object_matrix(&g.a_oc()).unwrap();
        assert_eq!(po[(5, 2)], 1);
        assert_eq!(po.iter().sum::<u64>(), 1);
        g.update_graph(&FeatureVec::basis(4, 1), &FeatureVec::basis(6, 5), &c, 1, [0.0; 2]).unwrap();
        g.register_objects(&[obj], 1).unwrap();
        let po = g.place_object_matrix(&g.a_oc()).unwrap();
        assert_eq!(po[(5, 2)], 2);
        assert!(g.place_object_matrix(&Matrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn guard_blocks_debug_pose() {
        let c = clusters(2, 2);
        let mut g = SemanticGraphMap::new(2, 1);
        g.update_graph(&FeatureVec::basis(2, 0), &FeatureVec::basis(2, 0), &c, 0, [1.5, 2.0]).unwrap();
        assert_eq!(g.image_nodes()[0].debug_pose(), [1.5, 2.0]);
        let r = std::panic::catch_unwind(|| with_policy_guard(|| g.image_nodes()[0].debug_pose()));
        assert!(r.is_err());
        assert!(!policy_guard_active());
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let c = clusters(3, 3);
        let mut g = SemanticGraphMap::new(3, 2).with_clusters_ref("clusters.json");
        let mut rng = seeded(1);
        for step in 0..8 {
            let f = FeatureVec::random_unit(8, &mut rng);
            let node = g.update_graph(&f, &FeatureVec::basis(3, rng.random_range(0..3)), &c, step, [step as f64, 0.0]).unwrap().node;
            g.register_objects(
                &[ObjectObservation { feature: FeatureVec::random_unit(4, &mut rng), category: step % 2, score: 0.7 }],
                node,
            )
            .unwrap();
        }
        let s = serde_json::to_string(&g).unwrap();
        let back: SemanticGraphMap = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
        v["a_io"] = serde_json::json!([]);
        assert!(serde_json::from_value::<SemanticGraphMap>(v).is_err());
    }
}
