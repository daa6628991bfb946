//! Graph localization: match a query to an image node, estimate node-to-node
//! distances by hop count, and score distance estimates against ground truth.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeaError};
use crate::features::{ClusterModel, FeatureVec};
use crate::rng::{seeded, SeaRng};
use crate::sgm::{ObjectObservation, SemanticGraphMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub matched_node: usize,
    pub position_estimate: [f64; 2],
    pub confidence: f64,
}

/// Query with optional context: the place cluster the agent believes it is
/// in and the categories it currently sees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub image: FeatureVec,
    #[serde(default)]
    pub place: Option<usize>,
    #[serde(default)]
    pub objects: Vec<usize>,
    /// Ground-truth position, evaluation only.
    #[serde(default)]
    pub pose: Option<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextWeights {
    pub image: f64,
    pub place: f64,
    pub object: f64,
}

impl Default for ContextWeights {
    fn default() -> Self {
        Self { image: 1.0, place: 0.25, object: 0.25 }
    }
}

impl ContextWeights {
    pub fn image_only() -> Self {
        Self { place: 0.0, object: 0.0, ..Self::default() }
    }

    pub fn image_object() -> Self {
        Self { place: 0.0, ..Self::default() }
    }
}

fn best_node(sgm: &SemanticGraphMap, score: impl Fn(usize) -> f64) -> Result<(usize, f64)> {
    if sgm.is_empty() {
        return Err(SeaError::invalid("cannot localize against an empty graph"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..sgm.image_nodes().len() {
        let s = score(i);
        if s > best.1 {
            best = (i, s);
        }
    }
    Ok(best)
}

fn result(sgm: &SemanticGraphMap, (node, sim): (usize, f64)) -> LocalizationResult {
    LocalizationResult { matched_node: node, position_estimate: sgm.image_nodes()[node].debug_pose(), confidence: sim.clamp(-1.0, 1.0) }
}

/// Best image node by cosine similarity.
pub fn localize_query(sgm: &SemanticGraphMap, query: &FeatureVec) -> Result<LocalizationResult> {
    let n = query.norm();
    if n == 0.0 {
        return Err(SeaError::ZeroVector);
    }
    if let Some(first) = sgm.image_nodes().first() {
        if first.feature.dim() != query.dim() {
            return Err(SeaError::DimensionMismatch { expected: first.feature.dim(), got: query.dim() });
        }
    }
    let best = best_node(sgm, |i| sgm.image_nodes()[i].feature.dot(query) / n)?;
    Ok(result(sgm, best))
}

fn unit_histogram(categories: impl Iterator<Item = usize>, n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n];
    for c in categories.filter(|&c| c < n) {
        h[c] += 1.0;
    }
    let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        h.iter_mut().for_each(|x| *x /= norm);
    }
    h
}

/// Matching on the weighted concatenation of image feature, place one-hot and
/// object-category histogram. Channels missing from the query contribute
/// nothing.
pub fn localize_with_context(sgm: &SemanticGraphMap, query: &Query, w: &ContextWeights) -> Result<LocalizationResult> {
    let qn = query.image.norm();
    if qn == 0.0 {
        return Err(SeaError::ZeroVector);
    }
    let nc = sgm.n_categories();
    let q_hist = unit_histogram(query.objects.iter().copied(), nc);
    let q_has_hist = q_hist.iter().any(|&x| x > 0.0);
    let q_norm2 = w.image * w.image
        + if query.place.is_some() { w.place * w.place } else { 0.0 }
        + if q_has_hist { w.object * w.object } else { 0.0 };
    let best = best_node(sgm, |i| {
        let node = &sgm.image_nodes()[i];
        let hist = unit_histogram(sgm.objects_of(i).map(|o| o.category), nc);
        let has_hist = hist.iter().any(|&x| x > 0.0);
        let mut dot = w.image * w.image * node.feature.dot(&query.image) / qn;
        if query.place == Some(node.place_cluster) {
            dot += w.place * w.place;
        }
        dot += w.object * w.object * hist.iter().zip(&q_hist).map(|(a, b)| a * b).sum::<f64>();
        let n_norm2 = w.image * w.image + w.place * w.place + if has_hist { w.object * w.object } else { 0.0 };
        let denom = (q_norm2 * n_norm2).sqrt();
        if denom > 0.0 {
            dot / denom
        } else {
            0.0
        }
    })?;
    Ok(result(sgm, best))
}

/// Mean metric length of image edges, from the creation poses.
pub fn mean_edge_length(sgm: &SemanticGraphMap) -> Option<f64> {
    let nodes = sgm.image_nodes();
    let lens: Vec<f64> = sgm
        .image_edges()
        .map(|(a, b)| {
            let (p, q) = (nodes[a].debug_pose(), nodes[b].debug_pose());
            (p[0] - q[0]).hypot(p[1] - q[1])
        })
        .collect();
    (!lens.is_empty()).then(|| lens.iter().sum::<f64>() / lens.len() as f64)
}

/// Hop count times the mean edge length; infinite when disconnected.
pub fn node_distance_estimate(sgm: &SemanticGraphMap, src: usize, dst: usize) -> Result<f64> {
    let n = sgm.image_nodes().len();
    if src >= n || dst >= n {
        return Err(SeaError::invalid(format!("node {} does not exist", src.max(dst))));
    }
    if src == dst {
        return Ok(0.0);
    }
    let hops = sgm.hop_distances(src)[dst];
    Ok(match (hops, mean_edge_length(sgm)) {
        (Some(h), Some(len)) => h as f64 * len,
        _ => f64::INFINITY,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceSample {
    pub estimate: f64,
    pub truth: f64,
}

/// Fraction of samples with `|estimate - truth| <= radius`.
pub fn accuracy_at(samples: &[DistanceSample], radius: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(SeaError::invalid("accuracy of an empty result set"));
    }
    let hits = samples.iter().filter(|s| (s.estimate - s.truth).abs() <= radius).count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Distance samples for consecutive query pairs: estimated hop distance
/// between matched nodes against the true distance between query poses.
pub fn pair_samples(sgm: &SemanticGraphMap, queries: &[Query], w: &ContextWeights) -> Result<Vec<DistanceSample>> {
    let mut matched = Vec::with_capacity(queries.len());
    for q in queries {
        let pose = q.pose.ok_or_else(|| SeaError::invalid("query without ground-truth pose"))?;
        matched.push((localize_with_context(sgm, q, w)?.matched_node, pose));
    }
    matched
        .chunks_exact(2)
        .map(|pair| {
            let ((a, pa), (b, pb)) = (pair[0], pair[1]);
            Ok(DistanceSample { estimate: node_distance_estimate(sgm, a, b)?, truth: (pa[0] - pb[0]).hypot(pa[1] - pb[1]) })
        })
        .collect()
}

/// Parameters of the synthetic localization fixture: rooms laid out along a
/// line of nodes whose image features repeat from room to room.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub rooms: usize,
    pub nodes_per_room: usize,
    pub spacing: f64,
    pub dim: usize,
    /// Squared weight of the shared pattern; also the cosine between aliases.
    pub alias: f64,
    /// L2 norm of the query image noise.
    pub query_noise: f64,
    pub objects_per_room: usize,
    pub object_miss: f64,
    pub place_error: f64,
    pub queries: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            rooms: 4,
            nodes_per_room: 6,
            spacing: 0.8,
            dim: crate::features::IMAGE_DIM,
            alias: 0.7,
            query_noise: 5.0,
            objects_per_room: 3,
            object_miss: 0.3,
            place_error: 0.05,
            queries: 200,
        }
    }
}

pub struct Fixture {
    pub sgm: SemanticGraphMap,
    pub queries: Vec<Query>,
}

fn gaussian_vec(rng: &mut SeaRng, dim: usize, norm: f64) -> Vec<f64> {
    let s = norm / (dim as f64).sqrt();
    (0..dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Builds the fixture map and its query set for `seed`.
pub fn context_fixture(seed: u64, cfg: &FixtureConfig) -> Result<Fixture> {
    if cfg.rooms == 0 || cfg.nodes_per_room == 0 || !(0.0..1.0).contains(&cfg.alias) {
        return Err(SeaError::invalid("fixture needs rooms, nodes and alias in [0, 1)"));
    }
    let n_cat = 15;
    if cfg.rooms * cfg.objects_per_room > n_cat {
        return Err(SeaError::invalid("not enough categories for disjoint room contents"));
    }
    let mut rng = seeded(seed);
    let patterns: Vec<FeatureVec> = (0..cfg.nodes_per_room).map(|_| FeatureVec::random_unit(cfg.dim, &mut rng)).collect();
    let mut cats: Vec<usize> = (0..n_cat).collect();
    cats.shuffle(&mut rng);
    let room_cats: Vec<&[usize]> = cats.chunks(cfg.objects_per_room.max(1)).take(cfg.rooms).collect();
    let clusters = ClusterModel::new((0..cfg.rooms).map(|r| FeatureVec::basis(cfg.rooms, r)).collect())?;
    let mut sgm = SemanticGraphMap::new(cfg.rooms, n_cat).with_clusters_ref("fixture");

    let (a, b) = (cfg.alias.sqrt(), (1.0 - cfg.alias).sqrt());
    let mut node_features = Vec::new();
    let mut node_objects: Vec<Vec<usize>> = Vec::new();
    for r in 0..cfg.rooms {
        for j in 0..cfg.nodes_per_room {
            let own = FeatureVec::random_unit(cfg.dim, &mut rng);
            let f = FeatureVec::normalized(patterns[j].as_slice().iter().zip(own.as_slice()).map(|(p, u)| a * p + b * u).collect())?;
            let k = r * cfg.nodes_per_room + j;
            let up = sgm.update_graph(&f, &FeatureVec::basis(cfg.rooms, r), &clusters, k, [k as f64 * cfg.spacing, 0.0])?;
            if !up.was_new {
                return Err(SeaError::invalid("fixture nodes merged; lower the alias"));
            }
            // each node sees one or two of its room's objects
            let seen: Vec<usize> = room_cats[r].iter().copied().filter(|_| rng.random_bool(0.6)).collect();
            let seen = if seen.is_empty() { vec![room_cats[r][j % room_cats[r].len()]] } else { seen };
            let obs: Vec<ObjectObservation> =
                seen.iter().map(|&c| ObjectObservation { feature: FeatureVec::basis(n_cat, c), category: c, score: 0.9 }).collect();
            sgm.register_objects(&obs, up.node)?;
            node_features.push(f);
            node_objects.push(seen);
        }
    }

    let n = node_features.len();
    let queries = (0..cfg.queries)
        .map(|_| {
            let k = rng.random_range(0..n);
            let r = k / cfg.nodes_per_room;
            let noise = gaussian_vec(&mut rng, cfg.dim, cfg.query_noise);
            let image = FeatureVec::normalized(node_features[k].as_slice().iter().zip(noise).map(|(x, e)| x + e).collect())
                .unwrap_or_else(|_| node_features[k].clone());
            let place = if rng.random_bool(cfg.place_error) { rng.random_range(0..cfg.rooms) } else { r };
            let objects = node_objects[k].iter().copied().filter(|_| !rng.random_bool(cfg.object_miss)).collect();
            let offset = rng.random_range(-0.15..=0.15);
            Query { image, place: Some(place), objects, pose: Some([k as f64 * cfg.spacing + offset, 0.0]) }
        })
        .collect();
    Ok(Fixture { sgm, queries })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelAccuracy {
    pub acc_05: f64,
    pub acc_1: f64,
}

/// Acc@0.5m and Acc@1m with image only, image plus objects, and all three
/// channels.
pub fn channel_ablation(fixture: &Fixture, weights: &ContextWeights) -> Result<[ChannelAccuracy; 3]> {
    let variants = [ContextWeights { place: 0.0, object: 0.0, ..*weights }, ContextWeights { place: 0.0, ..*weights }, *weights];
    let mut out = [ChannelAccuracy { acc_05: 0.0, acc_1: 0.0 }; 3];
    for (o, w) in out.iter_mut().zip(variants) {
        let s = pair_samples(&fixture.sgm, &fixture.queries, &w)?;
        *o = ChannelAccuracy { acc_05: accuracy_at(&s, 0.5)?, acc_1: accuracy_at(&s, 1.0)? };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_map(features: &[FeatureVec], spacing: f64) -> SemanticGraphMap {
        let clusters = ClusterModel::new(vec![FeatureVec::basis(2, 0), FeatureVec::basis(2, 1)]).unwrap();
        let mut sgm = SemanticGraphMap::new(2, 15);
        for (k, f) in features.iter().enumerate() {
            sgm.update_graph(f, &FeatureVec::basis(2, 0), &clusters, k, [k as f64 * spacing, 0.0]).unwrap();
        }
        sgm
    }

    #[test]
    fn stored_feature_matches_itself() {
        let mut rng = seeded(1);
        let fs: Vec<FeatureVec> = (0..5).map(|_| FeatureVec::random_unit(64, &mut rng)).collect();
        let sgm = line_map(&fs, 1.0);
        for (i, f) in fs.iter().enumerate() {
            let r = localize_query(&sgm, f).unwrap();
            assert_eq!(r.matched_node, i);
            assert!((r.confidence - 1.0).abs() < 1e-12);
            assert_eq!(r.position_estimate, [i as f64, 0.0]);
        }
    }

    #[test]
    fn nearer_node_wins() {
        let (ea, eb) = (FeatureVec::basis(3, 0), FeatureVec::basis(3, 1));
        let sgm = line_map(&[ea, eb], 1.0);
        let q = FeatureVec::normalized(vec![0.7, 0.5, 0.1]).unwrap();
        assert_eq!(localize_query(&sgm, &q).unwrap().matched_node, 0);
        assert!(localize_query(&SemanticGraphMap::new(2, 15), &q).is_err());
    }

    #[test]
    fn hop_distance() {
        let fs: Vec<FeatureVec> = (0..3).map(|i| FeatureVec::basis(3, i)).collect();
        let sgm = line_map(&fs[..2], 0.8);
        assert_eq!(node_distance_estimate(&sgm, 1, 1).unwrap(), 0.0);
        assert!((node_distance_estimate(&sgm, 0, 1).unwrap() - 0.8).abs() < 1e-12);
        let sgm3 = line_map(&fs, 0.8);
        assert!((node_distance_estimate(&sgm3, 0, 2).unwrap() - 1.6).abs() < 1e-12);
        assert_eq!(node_distance_estimate(&sgm3, 2, 0).unwrap(), node_distance_estimate(&sgm3, 0, 2).unwrap());
        assert!(node_distance_estimate(&sgm3, 0, 3).is_err());
    }

    #[test]
    fn accuracy_arithmetic() {
        let s = |e: f64| DistanceSample { estimate: 2.0 + e, truth: 2.0 };
        assert_eq!(accuracy_at(&[s(0.0), s(0.0)], 0.5).unwrap(), 1.0);
        assert_eq!(accuracy_at(&[s(0.1), s(2.0)], 0.5).unwrap(), 0.5);
        let r = accuracy_at(&[s(0.3), s(-0.7), s(1.5)], 1.0).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
        assert!(accuracy_at(&[], 1.0).is_err());
    }

    #[test]
    fn context_channels_help_on_fixture() {
        let cfg = FixtureConfig::default();
        let mut mean = [0.0; 3];
        for seed in 0..20 {
            let fx = context_fixture(seed, &cfg).unwrap();
            let acc = channel_ablation(&fx, &ContextWeights::default()).unwrap();
            for (m, a) in mean.iter_mut().zip(acc) {
                assert!(a.acc_05 <= a.acc_1);
                *m += a.acc_1 / 20.0;
            }
        }
        assert!(mean[0] <= mean[1] && mean[1] <= mean[2], "{mean:?}");
        assert!(mean[0] < 0.95, "fixture too easy: {mean:?}");
    }
}
