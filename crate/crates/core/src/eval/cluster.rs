use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::Model;
use crate::normalize::Normalizer;

const MAX_ITERATIONS: usize = 100;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("empty corpus")]
    Empty,
    #[error("k = {k} must be between 1 and the corpus size {n}")]
    BadK { k: usize, n: usize },
}

type Sparse = Vec<(usize, f64)>;

fn dot(a: &Sparse, b: &Sparse) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

fn unit(mut v: Sparse) -> Sparse {
    let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, x) in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Normalized tokens of every `name` attribute in `m`.
pub fn name_tokens(m: &Model, normalizer: &Normalizer) -> Vec<String> {
    m.objects
        .iter()
        .flat_map(|o| o.attributes.get("name").into_iter().flatten())
        .flat_map(|v| normalizer.normalize_value(v))
        .collect()
}

/// Unit-length TF-IDF vectors over name tokens, one per model.
fn tfidf(corpus: &[(String, Model)], normalizer: &Normalizer) -> Vec<Sparse> {
    let mut vocab: BTreeMap<String, usize> = BTreeMap::new();
    let docs: Vec<BTreeMap<usize, f64>> = corpus
        .iter()
        .map(|(_, m)| {
            let mut tf = BTreeMap::new();
            for t in name_tokens(m, normalizer) {
                let n = vocab.len();
                let id = *vocab.entry(t).or_insert(n);
                *tf.entry(id).or_insert(0.0) += 1.0;
            }
            tf
        })
        .collect();
    let mut df: HashMap<usize, f64> = HashMap::new();
    for d in &docs {
        for id in d.keys() {
            *df.entry(*id).or_default() += 1.0;
        }
    }
    let n = corpus.len() as f64;
    docs.into_iter()
        .map(|d| unit(d.into_iter().map(|(id, tf)| (id, tf * (n / df[&id]).ln())).collect()))
        .collect()
}

fn centroid(members: &[&Sparse]) -> Sparse {
    let mut sum: BTreeMap<usize, f64> = BTreeMap::new();
    for v in members {
        for (id, x) in v.iter() {
            *sum.entry(*id).or_default() += x;
        }
    }
    unit(sum.into_iter().collect())
}

fn nearest(v: &Sparse, centers: &[Sparse]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let s = dot(v, center);
        if s > best.1 {
            best = (c, s);
        }
    }
    best.0
}

/// Spherical k-means over TF-IDF name vectors. The first center is a seeded
/// random model, each further one the model least similar to the centers
/// chosen so far. Returns model id -> cluster in `0..k`.
pub fn cluster_names(
    corpus: &[(String, Model)],
    normalizer: &Normalizer,
    k: usize,
    seed: u64,
) -> Result<BTreeMap<String, usize>, ClusterError> {
    let n = corpus.len();
    if n == 0 {
        return Err(ClusterError::Empty);
    }
    if k == 0 || k > n {
        return Err(ClusterError::BadK { k, n });
    }
    let vectors = tfidf(corpus, normalizer);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = vec![rng.random_range(0..n)];
    let mut closest: Vec<f64> = vectors.iter().map(|v| dot(v, &vectors[chosen[0]])).collect();
    while chosen.len() < k {
        let next = (0..n)
            .filter(|i| !chosen.contains(i))
            .min_by(|&a, &b| closest[a].total_cmp(&closest[b]).then(a.cmp(&b)))
            .expect("k <= n");
        chosen.push(next);
        for (i, v) in vectors.iter().enumerate() {
            closest[i] = closest[i].max(dot(v, &vectors[next]));
        }
    }
    let mut centers: Vec<Sparse> = chosen.iter().map(|&i| vectors[i].clone()).collect();
    // a chosen center always keeps itself
    let mut assign: Vec<usize> = vectors.iter().map(|v| nearest(v, &centers)).collect();
    for (c, &i) in chosen.iter().enumerate() {
        assign[i] = c;
    }

    for _ in 0..MAX_ITERATIONS {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Sparse> = (0..n).filter(|&i| assign[i] == c).map(|i| &vectors[i]).collect();
            if !members.is_empty() {
                *center = centroid(&members);
            }
        }
        let next: Vec<usize> = vectors.iter().map(|v| nearest(v, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    Ok(corpus.iter().map(|(id, _)| id.clone()).zip(assign).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelObject;

    fn named(words: &[&str]) -> Model {
        let mut m = Model::new("t");
        for (i, w) in words.iter().enumerate() {
            m.objects.push(ModelObject::new(format!("o{i}"), "C").with_attr("name", *w));
        }
        m
    }

    fn corpus() -> Vec<(String, Model)> {
        vec![
            ("a1".into(), named(&["apple", "banana", "cherry"])),
            ("a2".into(), named(&["apple", "banana", "grape"])),
            ("a3".into(), named(&["cherry", "grape", "apple"])),
            ("b1".into(), named(&["engine", "wheel", "brake"])),
            ("b2".into(), named(&["engine", "clutch", "wheel"])),
            ("b3".into(), named(&["brake", "clutch", "gear"])),
        ]
    }

    #[test]
    fn disjoint_families_separate() {
        let n = Normalizer::new(Default::default()).unwrap();
        for seed in 0..5 {
            let c = cluster_names(&corpus(), &n, 2, seed).unwrap();
            assert_eq!(c["a1"], c["a2"]);
            assert_eq!(c["a1"], c["a3"]);
            assert_eq!(c["b1"], c["b2"]);
            assert_eq!(c["b1"], c["b3"]);
            assert_ne!(c["a1"], c["b1"]);
        }
    }

    #[test]
    fn trivial_k() {
        let n = Normalizer::new(Default::default()).unwrap();
        let one = cluster_names(&corpus(), &n, 1, 3).unwrap();
        assert!(one.values().all(|&c| c == 0));
        let all = cluster_names(&corpus(), &n, 6, 3).unwrap();
        let mut ids: Vec<usize> = all.values().copied().collect();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(cluster_names(&corpus(), &n, 7, 3), Err(ClusterError::BadK { k: 7, n: 6 }));
    }

    #[test]
    fn deterministic() {
        let n = Normalizer::new(Default::default()).unwrap();
        assert_eq!(cluster_names(&corpus(), &n, 3, 9), cluster_names(&corpus(), &n, 3, 9));
    }
}
