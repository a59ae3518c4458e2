use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cluster::{cluster_names, ClusterError};
use super::EvalError;
use crate::model::{Model, ModelObject};
use crate::normalize::Normalizer;
use crate::synth::{ECORE_ATTRIBUTE, ECORE_CLASS, ECORE_ENUM, ECORE_LITERAL, ECORE_PACKAGE, ECORE_REFERENCE};

pub const MIN_CLASSES: usize = 20;
pub const MIN_ELEMENTS: usize = 40;
pub const RENAMED_PACKAGE: &str = "mutant";

/// Operator settings. Rates are fractions of the eligible elements, rounded
/// down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationConfig {
    /// `None` keeps the whole component of the root
    pub radius: Option<usize>,
    pub inheritance_rate: f64,
    pub class_rate: f64,
    pub reference_rate: f64,
    pub enum_rate: f64,
    pub attribute_rate: f64,
    pub rename_rate: f64,
    pub low_df_ceiling: u64,
    pub seed: u64,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            radius: Some(5),
            inheritance_rate: 0.2,
            class_rate: 0.3,
            reference_rate: 0.3,
            enum_rate: 0.5,
            attribute_rate: 0.3,
            rename_rate: 0.3,
            low_df_ceiling: 2,
            seed: 0,
        }
    }
}

impl MutationConfig {
    /// Keep everything reachable from the root, only rename packages.
    pub fn identity() -> Self {
        MutationConfig {
            radius: None,
            inheritance_rate: 0.0,
            class_rate: 0.0,
            reference_rate: 0.0,
            enum_rate: 0.0,
            attribute_rate: 0.0,
            rename_rate: 0.0,
            low_df_ceiling: 0,
            seed: 0,
        }
    }

    pub fn with_radius(mut self, radius: usize) -> Self {
        self.radius = Some(radius);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bounds = [
            ("inheritance_rate", self.inheritance_rate, 0.2),
            ("class_rate", self.class_rate, 0.3),
            ("reference_rate", self.reference_rate, 0.3),
            ("enum_rate", self.enum_rate, 0.5),
            ("attribute_rate", self.attribute_rate, 0.3),
            ("rename_rate", self.rename_rate, 0.3),
        ];
        for (name, v, max) in bounds {
            if !(0.0..=max).contains(&v) {
                return Err(EvalError::Config(format!("{name} must be in [0, {max}], got {v}")));
            }
        }
        if self.radius == Some(0) {
            return Err(EvalError::Config("radius must be at least 1".into()));
        }
        Ok(())
    }
}

/// What one operator did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorStep {
    pub operator: String,
    pub affected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryMutant {
    pub query: Model,
    pub origin: String,
    pub log: Vec<OperatorStep>,
    pub radius: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MutationError {
    #[error("model too small: {classes} classes, {elements} class and feature elements")]
    TooSmall { classes: usize, elements: usize },
    #[error("mutant discarded: {0}")]
    Discarded(String),
}

/// Corpus-level knowledge the operators draw on: how many models use each
/// element name, and the names available in each model's cluster.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MutationContext {
    pub name_df: BTreeMap<String, u64>,
    pub cluster_of: BTreeMap<String, usize>,
    pub class_vocab: BTreeMap<usize, Vec<String>>,
    pub feature_vocab: BTreeMap<usize, Vec<String>>,
}

impl MutationContext {
    pub fn build(
        corpus: &[(String, Model)],
        normalizer: &Normalizer,
        k: usize,
        seed: u64,
    ) -> Result<Self, ClusterError> {
        let cluster_of = cluster_names(corpus, normalizer, k, seed)?;
        let mut name_df: BTreeMap<String, u64> = BTreeMap::new();
        let mut class_vocab: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
        let mut feature_vocab: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
        for (id, m) in corpus {
            let c = cluster_of[id];
            let mut seen = BTreeSet::new();
            for o in &m.objects {
                let Some(name) = o.name() else { continue };
                seen.insert(name.to_string());
                match o.class_name.as_str() {
                    ECORE_CLASS => {
                        class_vocab.entry(c).or_default().insert(name.to_string());
                    }
                    ECORE_ATTRIBUTE | ECORE_REFERENCE => {
                        feature_vocab.entry(c).or_default().insert(name.to_string());
                    }
                    _ => {}
                }
            }
            for n in seen {
                *name_df.entry(n).or_default() += 1;
            }
        }
        let flatten = |v: BTreeMap<usize, BTreeSet<String>>| {
            v.into_iter()
                .map(|(c, s)| (c, s.into_iter().collect()))
                .collect()
        };
        Ok(MutationContext {
            name_df,
            cluster_of,
            class_vocab: flatten(class_vocab),
            feature_vocab: flatten(feature_vocab),
        })
    }

    /// Default cluster count for a corpus of `n` models.
    pub fn default_k(n: usize) -> usize {
        5usize.max(n.div_ceil(20)).min(n.max(1))
    }
}

fn classes(m: &Model) -> Vec<&ModelObject> {
    m.objects.iter().filter(|o| o.class_name == ECORE_CLASS).collect()
}

fn refs<'a>(o: &'a ModelObject, name: &str) -> &'a [String] {
    o.references.get(name).map_or(&[], Vec::as_slice)
}

fn count_kind(m: &Model, kind: &str) -> usize {
    m.count_class(kind)
}

/// Number of (EClass, EAttribute + EReference) objects.
pub fn element_counts(m: &Model) -> (usize, usize) {
    let c = count_kind(m, ECORE_CLASS);
    (c, c + count_kind(m, ECORE_ATTRIBUTE) + count_kind(m, ECORE_REFERENCE))
}

/// Class adjacency through references and inheritance, ignoring direction.
fn class_graph(m: &Model) -> BTreeMap<String, BTreeSet<String>> {
    let ids: HashSet<&str> = classes(m).iter().map(|o| o.id.as_str()).collect();
    let mut adj: BTreeMap<String, BTreeSet<String>> = ids.iter().map(|id| (id.to_string(), BTreeSet::new())).collect();
    let mut link = |a: &str, b: &str| {
        if a != b && ids.contains(a) && ids.contains(b) {
            adj.get_mut(a).expect("class").insert(b.to_string());
            adj.get_mut(b).expect("class").insert(a.to_string());
        }
    };
    for c in classes(m) {
        for s in refs(c, "eSuperTypes") {
            link(&c.id, s);
        }
        for f in refs(c, "eStructuralFeatures") {
            if let Some(fo) = m.object(f).filter(|o| o.class_name == ECORE_REFERENCE) {
                for t in refs(fo, "eType") {
                    link(&c.id, t);
                }
            }
        }
    }
    adj
}

/// Class with the most outgoing class references plus subtypes; ties go to
/// the smallest name.
pub fn choose_root(m: &Model) -> Option<String> {
    let class_ids: HashSet<&str> = classes(m).iter().map(|o| o.id.as_str()).collect();
    let mut subtypes: BTreeMap<&str, usize> = BTreeMap::new();
    for c in classes(m) {
        for s in refs(c, "eSuperTypes") {
            *subtypes.entry(s.as_str()).or_default() += 1;
        }
    }
    classes(m)
        .into_iter()
        .map(|c| {
            let out = refs(c, "eStructuralFeatures")
                .iter()
                .filter_map(|f| m.object(f))
                .filter(|f| f.class_name == ECORE_REFERENCE)
                .filter(|f| refs(f, "eType").iter().any(|t| class_ids.contains(t.as_str())))
                .count();
            let degree = out + subtypes.get(c.id.as_str()).copied().unwrap_or(0);
            (degree, c.name().unwrap_or("").to_string(), c.id.clone())
        })
        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1)).then_with(|| b.2.cmp(&a.2)))
        .map(|(_, _, id)| id)
}

fn distances(adj: &BTreeMap<String, BTreeSet<String>>, root: &str) -> BTreeMap<String, usize> {
    let mut dist = BTreeMap::new();
    let mut queue = VecDeque::new();
    dist.insert(root.to_string(), 0);
    queue.push_back(root.to_string());
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        for w in &adj[&v] {
            if !dist.contains_key(w) {
                dist.insert(w.clone(), d + 1);
                queue.push_back(w.clone());
            }
        }
    }
    dist
}

/// Remove `ids` and everything that depends on them: owned features and
/// literals, references typed by a removed class, and every link to a
/// removed object. Returns the number of objects removed.
fn remove_objects(m: &mut Model, ids: &HashSet<String>) -> usize {
    if ids.is_empty() {
        return 0;
    }
    let mut gone: HashSet<String> = ids.clone();
    for o in &m.objects {
        if gone.contains(&o.id) {
            for owned in refs(o, "eStructuralFeatures").iter().chain(refs(o, "eLiterals")) {
                gone.insert(owned.clone());
            }
        }
    }
    for o in &m.objects {
        if o.class_name == ECORE_REFERENCE && refs(o, "eType").iter().any(|t| gone.contains(t)) {
            gone.insert(o.id.clone());
        }
    }
    let before = m.objects.len();
    m.objects.retain(|o| !gone.contains(&o.id));
    for o in &mut m.objects {
        for targets in o.references.values_mut() {
            targets.retain(|t| !gone.contains(t));
        }
        o.references.retain(|_, v| !v.is_empty());
    }
    before - m.objects.len()
}

fn pick<T: Clone, R: rand::Rng + ?Sized>(rng: &mut R, mut pool: Vec<T>, rate: f64) -> Vec<T> {
    let n = (pool.len() as f64 * rate).floor() as usize;
    pool.shuffle(rng);
    pool.truncate(n);
    pool
}

fn ids_of(m: &Model, kinds: &[&str]) -> Vec<String> {
    m.objects
        .iter()
        .filter(|o| kinds.contains(&o.class_name.as_str()))
        .map(|o| o.id.clone())
        .collect()
}

/// Check the mutant invariants: at least three classes and at least
/// ceil(classes / 2) references.
pub fn check_mutant(m: &Model) -> Result<(), MutationError> {
    let c = count_kind(m, ECORE_CLASS);
    let r = count_kind(m, ECORE_REFERENCE);
    if c < 3 {
        return Err(MutationError::Discarded(format!("{c} classes left")));
    }
    if r < c.div_ceil(2) {
        return Err(MutationError::Discarded(format!("{r} references for {c} classes")));
    }
    Ok(())
}

/// Derive a query from `m` by applying the eight operators in turn.
pub fn mutate(
    m: &Model,
    origin: &str,
    cfg: &MutationConfig,
    ctx: &MutationContext,
) -> Result<QueryMutant, MutationError> {
    let (n_classes, n_elements) = element_counts(m);
    if n_classes < MIN_CLASSES || n_elements < MIN_ELEMENTS {
        return Err(MutationError::TooSmall {
            classes: n_classes,
            elements: n_elements,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q = m.clone();
    q.source_uri = format!("mutant://{origin}/{}", cfg.seed);
    let mut log = Vec::with_capacity(8);
    let mut step = |name: &str, affected: usize| {
        log.push(OperatorStep {
            operator: name.to_string(),
            affected,
        })
    };

    // 1. root-centred extraction, packages renamed
    let root = choose_root(&q).expect("model has classes");
    let dist = distances(&class_graph(&q), &root);
    let far: HashSet<String> = ids_of(&q, &[ECORE_CLASS])
        .into_iter()
        .filter(|id| dist.get(id).is_none_or(|&d| cfg.radius.is_some_and(|r| d > r)))
        .collect();
    let removed = remove_objects(&mut q, &far);
    for o in q.objects.iter_mut().filter(|o| o.class_name == ECORE_PACKAGE) {
        if let Some(v) = o.attributes.get_mut("name") {
            *v = vec![RENAMED_PACKAGE.to_string()];
        }
        if let Some(v) = o.attributes.get_mut("nsURI") {
            *v = vec![format!("http://{RENAMED_PACKAGE}")];
        }
    }
    step("extract_and_rename_packages", removed);

    // 2. inheritance links
    let links: Vec<(String, String)> = classes(&q)
        .iter()
        .flat_map(|c| refs(c, "eSuperTypes").iter().map(|s| (c.id.clone(), s.clone())))
        .collect();
    let cut = pick(&mut rng, links, cfg.inheritance_rate);
    for (c, s) in &cut {
        let o = q.objects.iter_mut().find(|o| &o.id == c).expect("class");
        if let Some(v) = o.references.get_mut("eSuperTypes") {
            v.retain(|x| x != s);
            if v.is_empty() {
                o.references.shift_remove("eSuperTypes");
            }
        }
    }
    step("remove_inheritance", cut.len());

    // 3. classes, farthest from the root first
    let mut candidates: Vec<String> = ids_of(&q, &[ECORE_CLASS]).into_iter().filter(|id| *id != root).collect();
    candidates.shuffle(&mut rng);
    candidates.sort_by_key(|id| std::cmp::Reverse(dist.get(id).copied().unwrap_or(0)));
    let n = (count_kind(&q, ECORE_CLASS) as f64 * cfg.class_rate).floor() as usize;
    let chosen: HashSet<String> = candidates.into_iter().take(n).collect();
    let n = chosen.len();
    remove_objects(&mut q, &chosen);
    step("remove_classes", n);

    // 4. references
    let chosen: HashSet<String> = pick(&mut rng, ids_of(&q, &[ECORE_REFERENCE]), cfg.reference_rate).into_iter().collect();
    let n = chosen.len();
    remove_objects(&mut q, &chosen);
    step("remove_references", n);

    // 5. enumerations and literals
    let pool = ids_of(&q, &[ECORE_ENUM, ECORE_LITERAL]);
    let chosen: HashSet<String> = pick(&mut rng, pool, cfg.enum_rate).into_iter().collect();
    let n = remove_objects(&mut q, &chosen);
    step("remove_enums_and_literals", n);

    // 6. attributes
    let chosen: HashSet<String> = pick(&mut rng, ids_of(&q, &[ECORE_ATTRIBUTE]), cfg.attribute_rate).into_iter().collect();
    let n = chosen.len();
    remove_objects(&mut q, &chosen);
    step("remove_attributes", n);

    // 7. rarely used names
    let rare: HashSet<String> = q
        .objects
        .iter()
        .filter(|o| o.class_name != ECORE_PACKAGE)
        .filter(|o| {
            o.name()
                .and_then(|name| ctx.name_df.get(name))
                .is_some_and(|&df| df <= cfg.low_df_ceiling)
        })
        .map(|o| o.id.clone())
        .collect();
    let n = remove_objects(&mut q, &rare);
    step("remove_rare_names", n);

    // 8. renames from the cluster's vocabulary
    let cluster = ctx.cluster_of.get(origin).copied();
    let eligible = ids_of(&q, &[ECORE_CLASS, ECORE_ATTRIBUTE, ECORE_REFERENCE]);
    let chosen = pick(&mut rng, eligible, cfg.rename_rate);
    let mut renamed = 0;
    for id in chosen {
        let o = q.objects.iter_mut().find(|o| o.id == id).expect("object");
        let vocab = match (o.class_name.as_str(), cluster) {
            (_, None) => None,
            (ECORE_CLASS, Some(c)) => ctx.class_vocab.get(&c),
            (_, Some(c)) => ctx.feature_vocab.get(&c),
        };
        let current = o.name().unwrap_or("").to_string();
        let options: Vec<&String> = vocab.into_iter().flatten().filter(|n| **n != current).collect();
        if let Some(new) = options.choose(&mut rng) {
            o.attributes.insert("name".into(), vec![(*new).clone()]);
            renamed += 1;
        }
    }
    step("rename_from_cluster", renamed);

    check_mutant(&q)?;
    Ok(QueryMutant {
        query: q,
        origin: origin.to_string(),
        log,
        radius: cfg.radius,
        seed: cfg.seed,
    })
}

/// Try every eligible model of `corpus` once per radius, cycling through
/// seeds derived from `base.seed`, until `limit` mutants are collected.
/// Returns the mutants and the rejections.
pub fn mutate_corpus(
    corpus: &[(String, Model)],
    ctx: &MutationContext,
    base: &MutationConfig,
    radii: &[usize],
    limit: usize,
) -> (Vec<QueryMutant>, Vec<(String, MutationError)>) {
    let mut out = Vec::new();
    let mut rejected = Vec::new();
    let radii: Vec<Option<usize>> = if radii.is_empty() {
        vec![base.radius]
    } else {
        radii.iter().map(|&r| Some(r)).collect()
    };
    for (i, (id, m)) in corpus.iter().enumerate() {
        if out.len() >= limit {
            break;
        }
        let cfg = MutationConfig {
            radius: radii[i % radii.len()],
            seed: base.seed.wrapping_add(i as u64),
            ..base.clone()
        };
        match mutate(m, id, &cfg, ctx) {
            Ok(q) => out.push(q),
            Err(e) => rejected.push((id.clone(), e)),
        }
    }
    (out, rejected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;
    use crate::synth::{ecore_corpus, ecore_model, EcoreShape, DOMAINS};

    fn big_model(classes: usize, seed: u64) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = EcoreShape {
            classes: (classes, classes),
            refs_per_class: (2, 2),
            ..EcoreShape::default()
        };
        ecore_model(&mut rng, &DOMAINS[1], &shape, "pkg")
    }

    #[test]
    fn twenty_five_classes_radius_five() {
        let m = big_model(25, 1);
        let cfg = MutationConfig::default().with_radius(5).with_seed(42);
        let q = mutate(&m, "x", &cfg, &MutationContext::default()).unwrap();
        assert_eq!(q.log.len(), 8);
        assert!(element_counts(&q.query).0 >= 3);
        assert!(validate_model(&q.query).is_valid());
        assert_eq!(mutate(&m, "x", &cfg, &MutationContext::default()).unwrap(), q);
    }

    #[test]
    fn small_model_is_rejected() {
        let m = big_model(10, 1);
        let err = mutate(&m, "x", &MutationConfig::default(), &MutationContext::default()).unwrap_err();
        assert!(matches!(err, MutationError::TooSmall { classes: 10, .. }));
        assert!(err.to_string().starts_with("model too small"));
    }

    #[test]
    fn identity_config_only_renames_packages() {
        let m = big_model(30, 4);
        let q = mutate(&m, "x", &MutationConfig::identity(), &MutationContext::default()).unwrap();
        let root = choose_root(&m).unwrap();
        let component = distances(&class_graph(&m), &root);
        let mut expected = m.clone();
        let outside: HashSet<String> = ids_of(&m, &[ECORE_CLASS])
            .into_iter()
            .filter(|id| !component.contains_key(id))
            .collect();
        remove_objects(&mut expected, &outside);
        let pkg = expected.objects.iter_mut().find(|o| o.class_name == ECORE_PACKAGE).unwrap();
        pkg.attributes.insert("name".into(), vec![RENAMED_PACKAGE.into()]);
        pkg.attributes.insert("nsURI".into(), vec![format!("http://{RENAMED_PACKAGE}")]);
        assert_eq!(q.query.objects, expected.objects);
    }

    #[test]
    fn mutants_never_grow() {
        let corpus = ecore_corpus(5, 12, &EcoreShape::default());
        for (i, (id, m)) in corpus.iter().enumerate() {
            let cfg = MutationConfig::identity();
            let Ok(full) = mutate(m, id, &cfg, &MutationContext::default()) else { continue };
            let cfg = MutationConfig::default().with_seed(i as u64).with_radius(5);
            if let Ok(q) = mutate(m, id, &cfg, &MutationContext::default()) {
                assert!(q.query.objects.len() <= full.query.objects.len());
            }
        }
    }

    #[test]
    fn rates_are_bounded() {
        let mut cfg = MutationConfig::default();
        cfg.class_rate = 0.5;
        assert!(cfg.validate().is_err());
        assert!(MutationConfig::default().validate().is_ok());
        assert!(MutationConfig::identity().validate().is_ok());
    }

    #[test]
    fn seeds_change_targets() {
        let m = big_model(40, 9);
        let a = mutate(&m, "x", &MutationConfig::default().with_seed(1), &MutationContext::default());
        let b = mutate(&m, "x", &MutationConfig::default().with_seed(2), &MutationContext::default());
        assert_ne!(a.map(|q| q.query), b.map(|q| q.query));
    }
}
