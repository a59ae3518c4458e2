//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pathmark_core::classifier::{classify_bop, select_k};
use pathmark_core::eval::{
    benchmark_latency, evaluate_mrr, mutate_corpus, MutationConfig, MutationContext, QueryBucket, TextIndex,
    TextParams,
};
use pathmark_core::graph::{build_graph, extract_paths, BagOfPaths, FilterConfig, PathString, VertexLabel};
use pathmark_core::index::{decode_key, split_path, Index, IndexConfig};
use pathmark_core::ingest::{index_models, IngestOptions};
use pathmark_core::normalize::stem;
use pathmark_core::scorer::{
    bm25_term, brute_force_score, score_query, search_model, BruteForceSearcher, EngineSearcher, ScoringParams,
};
use pathmark_core::synth::{
    ecore_corpus, ecore_query, labeled_corpus, phone_call_model, phone_call_query, random_corpus, random_model,
    state_machine_distractors, EcoreShape,
};

use common::{enumerate_paths, expected_postings, naive_scores, oracle_corpus};

type Outcome = Result<String, String>;

const SEED: u64 = 20_240_601;
const THRESHOLD: f64 = 0.7;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn build_index(models: &[(String, pathmark_core::model::Model)]) -> Result<Index, String> {
    let index = Index::in_memory(IndexConfig::default()).map_err(e)?;
    let opts = IngestOptions {
        keep_source: false,
        ..IngestOptions::default()
    };
    index_models(&index, models, opts).map_err(e)?;
    Ok(index)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let params = ScoringParams::default();
    let mut queries = 0;
    for c in 0..50 {
        let n = rng.random_range(10..=200);
        let models = random_corpus(SEED + c, n, rng.random_range(5..=50));
        let index = build_index(&models)?;
        let table = index.table("random").map_err(e)?;
        let oracle = oracle_corpus(&models, index.pipeline(), THRESHOLD);

        let mut qs: Vec<BagOfPaths> = (0..3)
            .map(|_| oracle.raw[rng.random_range(0..n)].1.clone())
            .collect();
        for _ in 0..2 {
            qs.push(index.pipeline().encode(&random_model(&mut rng, 30)));
        }
        for q in &qs {
            queries += 1;
            let engine = score_query(&table, q, &params, usize::MAX, false).map_err(e)?;
            let filtered_q = pathmark_core::normalize::filter_stop_paths(q, &oracle.stop);
            let brute = brute_force_score(&filtered_q, &oracle.filtered, &params).map_err(e)?;
            let naive = naive_scores(&filtered_q, &oracle.filtered);
            ensure(engine.len() == brute.len() && engine.len() == naive.len(), || {
                format!("corpus {c}: {} engine results, {} brute-force, {} naive", engine.len(), brute.len(), naive.len())
            })?;
            for (a, b) in engine.iter().zip(&brute) {
                ensure(a.model_id == b.model_id, || format!("corpus {c}: order differs at {} vs {}", a.model_id, b.model_id))?;
                ensure(rel_close(a.score, b.score, 1e-9), || format!("corpus {c}: {} scored {} vs {}", a.model_id, a.score, b.score))?;
                let n = naive[&a.model_id];
                ensure(rel_close(a.score, n, 1e-9), || format!("corpus {c}: {} scored {} vs naive {n}", a.model_id, a.score))?;
            }
        }
    }
    Ok(format!("50 corpora, {queries} queries"))
}

fn path_extraction_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut graphs = 0;
    let mut paths = 0;
    while graphs < 1500 {
        let m = random_model(&mut rng, 4);
        let max_len = rng.random_range(1..=5);
        let cfg = FilterConfig::default().with_max_path_length(max_len);
        let g = build_graph(&m, &cfg);
        if g.vertices().len() > 8 {
            continue;
        }
        graphs += 1;
        let got = extract_paths(&g, &cfg);
        let want = enumerate_paths(&g, max_len);
        ensure(got == want, || format!("graph {graphs} (max length {max_len}) differs: {got:?} vs {want:?}"))?;
        paths += got.total();
    }
    Ok(format!("{graphs} graphs, {paths} paths"))
}

fn running_example() -> Outcome {
    let mut models = state_machine_distractors();
    models.push(("phone-call".to_string(), phone_call_model()));
    let index = build_index(&models)?;
    let out = search_model(&index, &phone_call_query(), &ScoringParams::default(), 10, true).map_err(e)?;
    let top = out.results.first().ok_or("no results")?;
    ensure(top.model_id == "phone-call", || format!("first result is {}", top.model_id))?;
    let matched: Vec<&PathString> = top.matched_paths.iter().flatten().map(|m| &m.path).collect();
    let wait = PathString::alternating([VertexLabel::attr("wait"), VertexLabel::class("State")], ["name"]);
    let answer = PathString::alternating(
        [
            VertexLabel::attr("answer"),
            VertexLabel::class("Transition"),
            VertexLabel::class("State"),
            VertexLabel::attr("talk"),
        ],
        ["name", "target", "name"],
    );
    ensure(matched.contains(&&wait), || format!("{wait} not among the matches"))?;
    ensure(matched.contains(&&answer), || format!("{answer} not among the matches"))?;
    let next = out.results.get(1).map_or(0.0, |r| r.score);
    Ok(format!("rank 1 with score {:.3} (next {:.3}), {} matched paths", top.score, next, matched.len()))
}

fn known_item_mrr() -> Outcome {
    let corpus = ecore_corpus(SEED, 500, &EcoreShape::default());
    let index = build_index(&corpus)?;
    let normalizer = index.pipeline().normalizer().clone();
    let ctx = MutationContext::build(&corpus, &normalizer, MutationContext::default_k(corpus.len()), SEED).map_err(e)?;
    let base = MutationConfig::default().with_seed(SEED);
    let (mutants, rejected) = mutate_corpus(&corpus, &ctx, &base, &[5, 6, 7], 150);
    ensure(mutants.len() >= 100, || format!("only {} valid mutants ({} rejected)", mutants.len(), rejected.len()))?;

    let params = ScoringParams::default();
    let mar = evaluate_mrr(
        &mutants,
        |q| {
            search_model(&index, q, &params, 50, false)
                .map(|o| o.results)
                .map_err(|err| pathmark_core::eval::EvalError::Search(err.to_string()))
        },
        "mar",
        "synthetic-500",
    )
    .map_err(e)?;
    let text = TextIndex::build(&corpus, normalizer, TextParams::default());
    let baseline = evaluate_mrr(&mutants, |q| Ok(text.search(q, 50)), "text", "synthetic-500").map_err(e)?;
    let detail = format!(
        "{} mutants: MRR {:.4} vs text baseline {:.4}; ranks 1st..>=5th {:?}",
        mutants.len(),
        mar.mrr,
        baseline.mrr,
        [mar.histogram.first, mar.histogram.second, mar.histogram.third, mar.histogram.fourth, mar.histogram.fifth_or_more]
    );
    ensure(mar.mrr >= baseline.mrr, || format!("below baseline: {detail}"))?;
    ensure(mar.mrr >= 0.85, || format!("below 0.85: {detail}"))?;
    Ok(detail)
}

fn stop_path_behavior() -> Outcome {
    let mut models = state_machine_distractors();
    models.push(("phone-call".to_string(), phone_call_model()));
    let index = build_index(&models)?;
    let table = index.table("statemachine").map_err(e)?;
    let stemmed = index.pipeline().normalizer().normalize_value("initial").remove(0);
    let initial = PathString::alternating([VertexLabel::attr(stemmed), VertexLabel::class("PseudoState")], ["kind"]);
    ensure(table.stop_paths().map_err(e)?.contains(&initial), || "not a stop path".into())?;
    let key = split_path(&initial).map_err(e)?;
    let cells = table.get_postings(&key.row_key, &[key.qualifier.as_slice()]).map_err(e)?;
    ensure(cells.is_empty(), || "posting still stored".into())?;

    let params = ScoringParams::default();
    let q = index.pipeline().encode(&phone_call_query());
    ensure(q.contains(&initial), || "query lacks the path".into())?;
    let with = score_query(&table, &q, &params, usize::MAX, true).map_err(e)?;
    let mut without_q = q.clone();
    without_q.remove(&initial);
    let without = score_query(&table, &without_q, &params, usize::MAX, false).map_err(e)?;
    ensure(with.len() == without.len(), || "result sets differ".into())?;
    for (a, b) in with.iter().zip(&without) {
        ensure(a.model_id == b.model_id && a.score == b.score, || format!("{} changed", a.model_id))?;
        let hits = a.matched_paths.iter().flatten().filter(|m| m.path == initial).count();
        ensure(hits == 0, || format!("{} credited for the stop path", a.model_id))?;
    }
    Ok(format!("df 21/21, no posting, {} scores unchanged", with.len()))
}

fn unit_term() -> Outcome {
    let v = bm25_term(1, 1, 7, 7.0, 1, 1, &ScoringParams::default()).map_err(e)?;
    ensure((v - std::f64::consts::LN_2).abs() < 1e-12, || format!("got {v}"))?;
    ensure(format!("{v:.6}") == "0.693147", || format!("got {v}"))?;
    Ok(format!("{v:.12}"))
}

fn porter_stemmer() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let voc = fs::read_to_string(dir.join("porter_voc.txt")).map_err(e)?;
    let out = fs::read_to_string(dir.join("porter_output.txt")).map_err(e)?;
    let pairs: Vec<(&str, &str)> = voc.lines().zip(out.lines()).collect();
    ensure(pairs.len() >= 1000 && voc.lines().count() == out.lines().count(), || "reference files mismatch".into())?;
    let wrong: Vec<String> = pairs
        .iter()
        .filter(|(w, s)| stem(w) != *s)
        .take(5)
        .map(|(w, s)| format!("{w} -> {} (want {s})", stem(w)))
        .collect();
    ensure(wrong.is_empty(), || wrong.join(", "))?;
    Ok(format!("{} / {} words", pairs.len(), pairs.len()))
}

fn latency() -> Outcome {
    let corpus = ecore_corpus(SEED, 1000, &EcoreShape::default());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut queries = Vec::new();
    for classes in [3, 4, 10, 12, 30, 35] {
        for _ in 0..5 {
            queries.push(ecore_query(&mut rng, classes));
        }
    }
    let rows = benchmark_latency(&corpus, &[250, 500, 1000], &queries, &ScoringParams::default(), 20).map_err(e)?;
    let at = |b: QueryBucket| rows.iter().find(|r| r.index_size == 1000 && r.bucket == b).expect("row");
    let (small, medium, large) = (at(QueryBucket::Small), at(QueryBucket::Medium), at(QueryBucket::Large));
    ensure(small.queries > 0 && large.queries > 0, || "empty bucket".into())?;
    let detail = format!(
        "1000 models; small {:.1} ms (paths {:.1} / get {:.1} / score {:.1}), medium {:.1} ms, large {:.1} ms (paths {:.1} / get {:.1} / score {:.1})",
        small.total.mean_ms, small.paths.mean_ms, small.get.mean_ms, small.score.mean_ms,
        medium.total.mean_ms,
        large.total.mean_ms, large.paths.mean_ms, large.get.mean_ms, large.score.mean_ms,
    );
    ensure(small.total.mean_ms < 500.0, || format!("small too slow: {detail}"))?;
    ensure(large.total.mean_ms < 3000.0, || format!("large too slow: {detail}"))?;
    Ok(detail)
}

fn classifier() -> Outcome {
    let (models, labels) = labeled_corpus(SEED, 50);
    let index = build_index(&models)?;
    let params = ScoringParams::default();
    let engine = EngineSearcher {
        table: index.table("ecore").map_err(e)?,
        params,
    };
    let oracle = oracle_corpus(&models, index.pipeline(), THRESHOLD);
    let brute = BruteForceSearcher {
        corpus: oracle.filtered.clone(),
        stop_paths: oracle.stop.clone(),
        params,
    };
    let bops: BTreeMap<String, BagOfPaths> = oracle.raw.iter().cloned().collect();
    let sel = select_k(&engine, &bops, &labels, 2..=10, 10, SEED).map_err(e)?;
    let sel_brute = select_k(&brute, &bops, &labels, 2..=10, 10, SEED).map_err(e)?;
    ensure(sel.per_k == sel_brute.per_k && sel.k == sel_brute.k, || {
        format!("cross-validation differs: {:?} vs {:?}", sel.per_k, sel_brute.per_k)
    })?;
    let mut decisions = 0;
    for (id, bop) in &bops {
        let a = classify_bop(&engine, bop, &labels, sel.k, Some(id)).map_err(e)?;
        let b = classify_bop(&brute, bop, &labels, sel.k, Some(id)).map_err(e)?;
        ensure(a.label == b.label, || format!("{id}: {} vs {}", a.label, b.label))?;
        decisions += 1;
    }
    ensure(sel.mean_accuracy >= 0.9, || format!("mean validation accuracy {:.4}", sel.mean_accuracy))?;
    Ok(format!(
        "k={} mean validation accuracy {:.4}; {decisions} decisions identical to brute force",
        sel.k, sel.mean_accuracy
    ))
}

#[derive(serde::Deserialize)]
struct GoldenKey {
    vertices: Vec<(String, String)>,
    edges: Vec<String>,
    row: String,
    qualifier: String,
}

fn round_trip_audit() -> Outcome {
    let models = ecore_corpus(SEED, 50, &EcoreShape { classes: (4, 12), ..EcoreShape::default() });
    let index = build_index(&models)?;
    let table = index.table("ecore").map_err(e)?;
    let oracle = oracle_corpus(&models, index.pipeline(), THRESHOLD);
    let want = expected_postings(&oracle.filtered);

    let mut got: BTreeMap<PathString, BTreeMap<String, (u64, u64)>> = BTreeMap::new();
    let mut problem = None;
    table
        .scan_postings(&mut |row, qual, payload| {
            let mut check = || -> Result<(), String> {
                let p = decode_key(row, qual).map_err(e)?;
                let again = split_path(&p).map_err(e)?;
                ensure(again.row_key == row && again.qualifier == qual, || format!("split is not the inverse for {p}"))?;
                let cells = payload.entries.iter().map(|(id, post)| (id.clone(), (post.count, post.total))).collect();
                got.insert(p, cells);
                Ok(())
            };
            match check() {
                Ok(()) => true,
                Err(m) => {
                    problem = Some(m);
                    false
                }
            }
        })
        .map_err(e)?;
    if let Some(m) = problem {
        return Err(m);
    }
    ensure(got.len() == want.len(), || format!("{} stored paths, {} expected", got.len(), want.len()))?;
    for (p, cells) in &want {
        ensure(got.get(p) == Some(cells), || format!("payload differs for {p}"))?;
    }

    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_keys.json");
    let keys: Vec<GoldenKey> = serde_json::from_slice(&fs::read(golden).map_err(e)?).map_err(e)?;
    ensure(keys.len() == 10, || "golden file must hold 10 keys".into())?;
    for k in &keys {
        let vertices = k
            .vertices
            .iter()
            .map(|(kind, text)| if kind == "attr" { VertexLabel::attr(text) } else { VertexLabel::class(text) })
            .collect();
        let p = PathString::new(vertices, k.edges.clone()).map_err(e)?;
        let split = split_path(&p).map_err(e)?;
        ensure(split.row_key == k.row.as_bytes() && split.qualifier == k.qualifier.as_bytes(), || {
            format!(
                "{p}: got {} | {}",
                String::from_utf8_lossy(&split.row_key),
                String::from_utf8_lossy(&split.qualifier)
            )
        })?;
        ensure(decode_key(k.row.as_bytes(), k.qualifier.as_bytes()).map_err(e)? == p, || format!("{p} does not decode back"))?;
    }
    Ok(format!("{} stored paths match recomputation; 10 golden keys", got.len()))
}

fn main() -> ExitCode {
    let checks: [(&str, Duration, fn() -> Outcome); 10] = [
        ("oracle equivalence", Duration::from_secs(120), oracle_equivalence),
        ("path extraction oracle", Duration::from_secs(60), path_extraction_oracle),
        ("running example fixture", Duration::from_secs(60), running_example),
        ("known-item MRR", Duration::from_secs(600), known_item_mrr),
        ("stop-path behavior", Duration::from_secs(60), stop_path_behavior),
        ("unit BM25 term", Duration::from_secs(1), unit_term),
        ("Porter stemmer", Duration::from_secs(60), porter_stemmer),
        ("latency", Duration::from_secs(600), latency),
        ("classifier", Duration::from_secs(300), classifier),
        ("index round-trip audit", Duration::from_secs(60), round_trip_audit),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = check();
        let took = started.elapsed();
        let outcome = match outcome {
            Ok(d) if took > budget => Err(format!("{d}; over the {budget:?} budget")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{:.2}s]", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{:.2}s]", took.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
