use std::fs;
use std::path::Path;

use pathmark_core::index::{Index, IndexConfig, MANIFEST_FILE};
use pathmark_core::ingest::{audit, crawl_directory, index_corpus, sha256_hex, CorpusManifest, IngestOptions};
use pathmark_core::model::{to_json_pretty, ModelFormat};
use pathmark_core::scorer::{search_model, ScoringParams};
use pathmark_core::synth::{phone_call_model, phone_call_query, state_machine_distractors};

const SHOP_XMI: &str = r##"<?xml version="1.0" encoding="UTF-8"?>
<ecore:EPackage xmi:version="2.0" xmlns:xmi="http://www.omg.org/XMI" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"
    xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore" name="shop">
  <eClassifiers xsi:type="ecore:EClass" name="Order">
    <eStructuralFeatures xsi:type="ecore:EReference" name="items" upperBound="-1" eType="#//Item"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="Item"/>
</ecore:EPackage>"##;

fn write_corpus(root: &Path) {
    fs::create_dir_all(root.join("nested/deeper")).unwrap();
    for (id, m) in state_machine_distractors().into_iter().take(6) {
        fs::write(root.join(format!("{id}.json")), to_json_pretty(&m)).unwrap();
    }
    let phone = to_json_pretty(&phone_call_model());
    fs::write(root.join("nested/deeper/phone.json"), &phone).unwrap();
    fs::write(root.join("nested/copy-of-phone.json"), &phone).unwrap();
    fs::write(root.join("shop.xmi"), SHOP_XMI).unwrap();
    fs::write(root.join("broken.json"), "{ not json").unwrap();
    fs::write(root.join("notes.txt"), "ignored").unwrap();
}

#[test]
fn crawl_lists_matching_files_in_sorted_order() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let m = crawl_directory(dir.path(), "statemachine", &[]).unwrap();
    let names: Vec<String> = m
        .entries
        .iter()
        .map(|e| Path::new(&e.source_path).file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert!(!names.contains(&"notes.txt".to_string()));
    assert!(names.contains(&"shop.xmi".to_string()));
    assert_eq!(m.entries.len(), 9);
    assert_eq!(m.skipped.len(), 1);
    assert!(m.skipped[0].reason.starts_with("duplicate of"));
    let xmi = m.entries.iter().find(|e| e.source_path.ends_with("shop.xmi")).unwrap();
    assert_eq!(xmi.format, ModelFormat::Xmi);
    assert_eq!(xmi.sha256, sha256_hex(SHOP_XMI.as_bytes()));
    assert!(xmi.model_id.ends_with("-shop"));
    assert_eq!(crawl_directory(dir.path(), "statemachine", &[]).unwrap().entries, m.entries);
}

#[test]
fn globs_are_relative_and_respect_separators() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let top = crawl_directory(dir.path(), "sm", &["*.json".to_string()]).unwrap();
    assert!(top.entries.iter().all(|e| !e.source_path.contains("nested")));
    let nested = crawl_directory(dir.path(), "sm", &["nested/**/*.json".to_string()]).unwrap();
    assert_eq!(nested.entries.len(), 1);
    assert!(nested.entries[0].source_path.ends_with("copy-of-phone.json"));
}

#[test]
fn index_corpus_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    write_corpus(&corpus);
    let manifest = crawl_directory(&corpus, "statemachine", &["**/*.json".to_string()]).unwrap();
    let index_dir = dir.path().join("idx");
    let index = Index::create(&index_dir, IndexConfig::default()).unwrap();
    let report = index_corpus(&index, &manifest, IngestOptions::default()).unwrap();
    assert_eq!(report.indexed, 7);
    assert_eq!(report.skipped.len(), 1);
    assert!(report.skipped[0].reason.starts_with("parse error"));
    assert_eq!(report.stats[0].t, 7);

    let stored = CorpusManifest::read(&index_dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(stored.corpus_hash(), manifest.corpus_hash());
    assert!(audit(&index, &manifest, 100).unwrap().is_empty());

    let phone = manifest.entries.iter().find(|e| e.source_path.ends_with("phone.json")).unwrap();
    let model = index.reader().model(&phone.model_id).unwrap().unwrap();
    let bytes = model.source.unwrap();
    assert_eq!(sha256_hex(&bytes), phone.sha256);
    assert_eq!(model.meta.sha256.as_deref(), Some(phone.sha256.as_str()));

    let out = search_model(&index, &phone_call_query(), &ScoringParams::default(), 5, false).unwrap();
    assert_eq!(out.results[0].model_id, phone.model_id);

    let again = index_corpus(&index, &manifest, IngestOptions::default()).unwrap();
    assert_eq!(again.indexed, 0);
    assert_eq!(index.table("statemachine").unwrap().t(), 7);
}

#[test]
fn manifest_type_overrides_file_type() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("shop.xmi"), SHOP_XMI).unwrap();
    let manifest = crawl_directory(dir.path(), "metamodels", &[]).unwrap();
    let index = Index::in_memory(IndexConfig::default()).unwrap();
    index_corpus(&index, &manifest, IngestOptions::default()).unwrap();
    assert_eq!(index.model_types(), vec!["metamodels".to_string()]);
}
