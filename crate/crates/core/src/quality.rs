//! Decision-quality checking: a penultimate-layer dataset of past predictions
//! grouped by outcome (TP/TN/FP/FN), and a nearest-average-distance verdict
//! for new predictions.

use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detectors::Detector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PredictionCategory {
    #[serde(rename = "TP")]
    Tp,
    #[serde(rename = "TN")]
    Tn,
    #[serde(rename = "FP")]
    Fp,
    #[serde(rename = "FN")]
    Fn,
}

impl PredictionCategory {
    /// All categories in tie-break order.
    pub const ALL: [PredictionCategory; 4] = [Self::Tp, Self::Tn, Self::Fp, Self::Fn];

    pub fn of(predicted: bool, actual: bool) -> Self {
        match (predicted, actual) {
            (true, true) => Self::Tp,
            (false, false) => Self::Tn,
            (true, false) => Self::Fp,
            (false, true) => Self::Fn,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether the underlying prediction was right.
    pub fn is_correct(self) -> bool {
        matches!(self, Self::Tp | Self::Tn)
    }
}

impl fmt::Display for PredictionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tp => "TP",
            Self::Tn => "TN",
            Self::Fp => "FP",
            Self::Fn => "FN",
        })
    }
}

impl std::str::FromStr for PredictionCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown prediction category '{s}'")))
    }
}

/// Four per-category values in [`PredictionCategory::ALL`] order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerCategory<T> {
    #[serde(rename = "TP")]
    pub tp: T,
    #[serde(rename = "TN")]
    pub tn: T,
    #[serde(rename = "FP")]
    pub fp: T,
    #[serde(rename = "FN")]
    pub fn_: T,
}

impl<T> PerCategory<T> {
    pub fn from_fn(mut f: impl FnMut(PredictionCategory) -> T) -> Self {
        let [tp, tn, fp, fn_] = PredictionCategory::ALL.map(&mut f);
        Self { tp, tn, fp, fn_ }
    }

    pub fn get(&self, c: PredictionCategory) -> &T {
        match c {
            PredictionCategory::Tp => &self.tp,
            PredictionCategory::Tn => &self.tn,
            PredictionCategory::Fp => &self.fp,
            PredictionCategory::Fn => &self.fn_,
        }
    }

    pub fn get_mut(&mut self, c: PredictionCategory) -> &mut T {
        match c {
            PredictionCategory::Tp => &mut self.tp,
            PredictionCategory::Tn => &mut self.tn,
            PredictionCategory::Fp => &mut self.fp,
            PredictionCategory::Fn => &mut self.fn_,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (PredictionCategory, &T)> {
        PredictionCategory::ALL.into_iter().map(move |c| (c, self.get(c)))
    }
}

/// Sample indices routed by prediction outcome.
pub type CategorySplit = PerCategory<Vec<usize>>;

impl CategorySplit {
    pub fn sizes(&self) -> [usize; 4] {
        PredictionCategory::ALL.map(|c| self.get(c).len())
    }
}

/// Route every labeled sample into exactly one outcome category.
pub fn split_by_category<D: Detector>(model: &D, data: &D::Data, threshold: f64) -> Result<CategorySplit> {
    let probs = model.predict_proba(data)?;
    Ok(split_scores(&probs, &D::labels(data), threshold))
}

/// [`split_by_category`] on precomputed probabilities.
pub fn split_scores(probabilities: &[f64], labels: &[u8], threshold: f64) -> CategorySplit {
    let mut split = CategorySplit::default();
    for (i, (&p, &y)) in probabilities.iter().zip(labels).enumerate() {
        split.get_mut(PredictionCategory::of(p > threshold, y == 1)).push(i);
    }
    split
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Manhattan,
}

impl DistanceMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| x - y);
        match self {
            Self::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Self::Manhattan => diffs.map(f64::abs).sum(),
        }
    }
}

/// Penultimate vectors per outcome category, tied to the model that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityDataset {
    pub fingerprint: String,
    pub dim: usize,
    #[serde(default)]
    pub metric: DistanceMetric,
    pub classes: PerCategory<Vec<Vec<f64>>>,
    /// Dataset indices the vectors came from, when known.
    #[serde(default)]
    pub sources: PerCategory<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub category: PredictionCategory,
    /// Average distance to each category; `None` for empty categories.
    pub distances: PerCategory<Option<f64>>,
}

impl QualityDataset {
    pub fn new(fingerprint: String, dim: usize, classes: PerCategory<Vec<Vec<f64>>>) -> Result<Self> {
        for (c, vs) in classes.iter() {
            if let Some(v) = vs.iter().find(|v| v.len() != dim) {
                return Err(Error::dim(format!("{c} penultimate vector"), dim, v.len()));
            }
        }
        if classes.iter().all(|(_, v)| v.is_empty()) {
            return Err(Error::InvalidArgument("quality dataset has no samples in any category".into()));
        }
        Ok(Self { fingerprint, dim, metric: DistanceMetric::default(), classes, sources: PerCategory::default() })
    }

    pub fn with_metric(mut self, metric: DistanceMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn sizes(&self) -> [usize; 4] {
        PredictionCategory::ALL.map(|c| self.classes.get(c).len())
    }

    /// Category with the smallest average distance to `vector`; ties resolve
    /// in the order TP, TN, FP, FN.
    pub fn classify(&self, vector: &[f64]) -> Result<QualityVerdict> {
        if vector.len() != self.dim {
            return Err(Error::dim("probe penultimate vector", self.dim, vector.len()));
        }
        let nonempty = self.classes.iter().filter(|(_, v)| !v.is_empty()).count();
        if nonempty < 2 {
            return Err(Error::InvalidArgument(format!(
                "decision checking needs at least two nonempty categories, found {nonempty}"
            )));
        }
        let distances = PerCategory::from_fn(|c| {
            let vs = self.classes.get(c);
            (!vs.is_empty())
                .then(|| vs.iter().map(|v| self.metric.distance(vector, v)).sum::<f64>() / vs.len() as f64)
        });
        let mut best: Option<(PredictionCategory, f64)> = None;
        for (c, d) in distances.iter() {
            if let Some(d) = *d {
                if best.map_or(true, |(_, b)| d < b) {
                    best = Some((c, d));
                }
            }
        }
        let (category, _) = best.expect("at least two categories are nonempty");
        Ok(QualityVerdict { category, distances })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let set: Self = crate::fsutil::read_json(path)?;
        let sources = set.sources;
        let mut checked = Self::new(set.fingerprint, set.dim, set.classes)?.with_metric(set.metric);
        checked.sources = sources;
        Ok(checked)
    }
}

/// Seeded subsample of up to `per_class_cap` samples per category, mapped
/// through the model's penultimate layer.
pub fn build_quality_dataset<D: Detector>(
    model: &D,
    data: &D::Data,
    split: &CategorySplit,
    per_class_cap: usize,
    seed: u64,
) -> Result<QualityDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dim = None;
    let mut classes = PerCategory::<Vec<Vec<f64>>>::default();
    let mut sources = PerCategory::<Vec<usize>>::default();
    for c in PredictionCategory::ALL {
        let pool = split.get(c);
        if pool.is_empty() {
            log::warn!("no {c} samples available for the quality dataset");
            continue;
        }
        let mut picked: Vec<usize> = if pool.len() > per_class_cap {
            sample(&mut rng, pool.len(), per_class_cap).into_iter().map(|i| pool[i]).collect()
        } else {
            pool.clone()
        };
        picked.sort_unstable();
        let rows = model.penultimate_rows(data, &picked)?;
        if let Some(r) = rows.first() {
            dim.get_or_insert(r.len());
        }
        *classes.get_mut(c) = rows;
        *sources.get_mut(c) = picked;
    }
    let dim = dim.ok_or_else(|| Error::InvalidArgument("every prediction category is empty".into()))?;
    let mut set = QualityDataset::new(model.fingerprint(), dim, classes)?;
    set.sources = sources;
    Ok(set)
}

/// Verdict for the sample at `index` of `data`.
pub fn check_decision<D: Detector>(model: &D, data: &D::Data, index: usize, set: &QualityDataset) -> Result<QualityVerdict> {
    Ok(check_decisions(model, data, &[index], set)?.remove(0))
}

/// Verdicts for several samples, in `indices` order.
pub fn check_decisions<D: Detector>(
    model: &D,
    data: &D::Data,
    indices: &[usize],
    set: &QualityDataset,
) -> Result<Vec<QualityVerdict>> {
    let actual = model.fingerprint();
    if actual != set.fingerprint {
        return Err(Error::StaleDataset { expected: set.fingerprint.clone(), actual });
    }
    model.penultimate_rows(data, indices)?.iter().map(|v| set.classify(v)).collect()
}

/// One CSV row per stored vector: `category,d0,…,d{dim-1}`.
pub fn export_embeddings(set: &QualityDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["category".to_string()];
    header.extend((0..set.dim).map(|i| format!("d{i}")));
    w.write_record(&header)?;
    for (c, vs) in set.classes.iter() {
        for v in vs {
            let mut rec = vec![c.to_string()];
            rec.extend(v.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    crate::fsutil::write_atomic(path, &bytes)
}

/// Read back an [`export_embeddings`] file.
pub fn load_embeddings(path: &Path) -> Result<Vec<(PredictionCategory, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let dim = r.headers()?.len().saturating_sub(1);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let cat: PredictionCategory = rec[0].parse().map_err(|e: Error| Error::Row { line, message: e.to_string() })?;
        let v = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|e| Error::Row { line, message: format!("'{s}': {e}") }))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != dim {
            return Err(Error::Row { line, message: format!("expected {dim} components, found {}", v.len()) });
        }
        out.push((cat, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(classes: [Vec<Vec<f64>>; 4]) -> QualityDataset {
        let [tp, tn, fp, fn_] = classes;
        let dim = [&tp, &tn, &fp, &fn_].iter().flat_map(|c| c.first()).next().unwrap().len();
        QualityDataset::new("f".into(), dim, PerCategory { tp, tn, fp, fn_ }).unwrap()
    }

    #[test]
    fn categories_follow_outcomes() {
        assert_eq!(PredictionCategory::of(true, true), PredictionCategory::Tp);
        assert_eq!(PredictionCategory::of(false, false), PredictionCategory::Tn);
        assert_eq!(PredictionCategory::of(true, false), PredictionCategory::Fp);
        assert_eq!(PredictionCategory::of(false, true), PredictionCategory::Fn);
        assert_eq!("FN".parse::<PredictionCategory>().unwrap(), PredictionCategory::Fn);
    }

    #[test]
    fn perfect_and_always_attack_splits() {
        let labels = [1, 0, 1, 0];
        let perfect = split_scores(&[0.9, 0.1, 0.8, 0.2], &labels, 0.5);
        assert_eq!(perfect.sizes(), [2, 2, 0, 0]);
        let always = split_scores(&[0.9; 4], &labels, 0.5);
        assert_eq!(always.sizes(), [2, 0, 2, 0]);
    }

    #[test]
    fn one_dimensional_toy() {
        let s = set([vec![vec![0.0], vec![2.0]], vec![vec![10.0], vec![12.0]], vec![], vec![]]);
        let v = s.classify(&[1.0]).unwrap();
        assert_eq!(v.category, PredictionCategory::Tp);
        assert_eq!(v.distances.tp, Some(1.0));
        assert_eq!(v.distances.tn, Some(10.0));
        assert_eq!(v.distances.fp, None);
    }

    #[test]
    fn exact_match_wins() {
        let s = set([vec![vec![1.0, 1.0]], vec![vec![50.0, 50.0]], vec![vec![-40.0, 0.0]], vec![vec![0.0, 70.0]]]);
        assert_eq!(s.classify(&[1.0, 1.0]).unwrap().category, PredictionCategory::Tp);
    }

    #[test]
    fn ties_follow_fixed_order() {
        let s = set([vec![vec![1.0]], vec![vec![-1.0]], vec![vec![1.0]], vec![vec![-1.0]]]);
        assert_eq!(s.classify(&[0.0]).unwrap().category, PredictionCategory::Tp);
        let s = set([vec![], vec![vec![-1.0]], vec![vec![1.0]], vec![vec![-1.0]]]);
        assert_eq!(s.classify(&[0.0]).unwrap().category, PredictionCategory::Tn);
        let s = set([vec![], vec![], vec![vec![1.0]], vec![vec![-1.0]]]);
        assert_eq!(s.classify(&[0.0]).unwrap().category, PredictionCategory::Fp);
    }

    #[test]
    fn needs_two_categories() {
        let s = set([vec![vec![1.0]], vec![], vec![], vec![]]);
        assert!(matches!(s.classify(&[0.0]), Err(Error::InvalidArgument(_))));
        assert!(QualityDataset::new("f".into(), 1, PerCategory::default()).is_err());
    }

    #[test]
    fn manhattan_metric() {
        let s = set([vec![vec![2.0, 0.0]], vec![vec![1.2, 1.2]], vec![], vec![]]);
        assert_eq!(s.classify(&[0.0, 0.0]).unwrap().category, PredictionCategory::Tn);
        let v = s.with_metric(DistanceMetric::Manhattan).classify(&[0.0, 0.0]).unwrap();
        assert_eq!(v.distances.tp, Some(2.0));
        assert!((v.distances.tn.unwrap() - 2.4).abs() < 1e-12);
        assert_eq!(v.category, PredictionCategory::Tp);
    }

    #[test]
    fn embeddings_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        let s = set([
            vec![vec![0.1, 0.2], vec![1.0 / 3.0, -2.5]],
            vec![vec![3.0, 4.0], vec![5.0, 6.0]],
            vec![vec![7.0, 8.0], vec![9.0, 1e-300]],
            vec![vec![0.0, -0.0], vec![f64::MAX, 2.0]],
        ]);
        export_embeddings(&s, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next(), Some("category,d0,d1"));
        assert_eq!(text.lines().count(), 9);
        let back = load_embeddings(&path).unwrap();
        assert_eq!(back.len(), 8);
        let expected: Vec<_> = s.classes.iter().flat_map(|(c, vs)| vs.iter().map(move |v| (c, v.clone()))).collect();
        assert_eq!(back, expected);
    }

    #[test]
    fn json_layout() {
        let s = set([vec![vec![1.0]], vec![vec![2.0]], vec![], vec![]]);
        let j = serde_json::to_value(&s).unwrap();
        assert_eq!(j["classes"]["TP"][0][0], 1.0);
        assert_eq!(j["dim"], 1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.json");
        s.save(&p).unwrap();
        assert_eq!(QualityDataset::load(&p).unwrap(), s);
    }

    fn vecs(dim: usize, max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, dim), 0..max)
    }

    proptest! {
        #[test]
        fn split_is_a_partition(scores in proptest::collection::vec((0.0f64..1.0, 0u8..2), 0..200)) {
            let (p, l): (Vec<f64>, Vec<u8>) = scores.into_iter().unzip();
            let s = split_scores(&p, &l, 0.5);
            let mut all: Vec<usize> = s.iter().flat_map(|(_, v)| v.clone()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..p.len()).collect::<Vec<_>>());
        }

        #[test]
        fn rotation_invariance(classes in [vecs(2, 5), vecs(2, 5), vecs(2, 5), vecs(2, 5)], probe in proptest::collection::vec(-5.0f64..5.0, 2), theta in 0.0f64..std::f64::consts::TAU) {
            prop_assume!(classes.iter().filter(|c| !c.is_empty()).count() >= 2);
            let (s, c) = theta.sin_cos();
            let rot = |v: &Vec<f64>| vec![c * v[0] - s * v[1], s * v[0] + c * v[1]];
            let a = set(classes.clone()).classify(&probe).unwrap();
            let b = set(classes.map(|vs| vs.iter().map(rot).collect())).classify(&rot(&probe)).unwrap();
            let mut d: Vec<f64> = a.distances.iter().filter_map(|(_, d)| *d).collect();
            d.sort_by(f64::total_cmp);
            prop_assume!(d[1] - d[0] > 1e-9);
            prop_assert_eq!(a.category, b.category);
            for ((_, x), (_, y)) in a.distances.iter().zip(b.distances.iter()) {
                prop_assert!(x.zip(*y).map_or(x.is_none() && y.is_none(), |(x, y)| (x - y).abs() < 1e-9));
            }
        }

        #[test]
        fn singletons_are_nearest_neighbor(points in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 4), probe in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let s = set([vec![points[0].clone()], vec![points[1].clone()], vec![points[2].clone()], vec![points[3].clone()]]);
            let d: Vec<f64> = points.iter().map(|p| DistanceMetric::Euclidean.distance(p, &probe)).collect();
            let nn = (0..4).fold(0, |b, i| if d[i] < d[b] { i } else { b });
            prop_assert_eq!(s.classify(&probe).unwrap().category, PredictionCategory::ALL[nn]);
        }

        #[test]
        fn duplication_keeps_averages(classes in [vecs(3, 6), vecs(3, 6), vecs(3, 6), vecs(3, 6)], probe in proptest::collection::vec(-5.0f64..5.0, 3)) {
            prop_assume!(classes.iter().filter(|c| !c.is_empty()).count() >= 2);
            let a = set(classes.clone()).classify(&probe).unwrap();
            let b = set(classes.map(|vs| vs.iter().flat_map(|v| [v.clone(), v.clone()]).collect())).classify(&probe).unwrap();
            for ((_, x), (_, y)) in a.distances.iter().zip(b.distances.iter()) {
                prop_assert!(x.zip(*y).map_or(x.is_none() && y.is_none(), |(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs())));
            }
        }
    }
}
