// Copyright 2026 The DDS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

mod common;

use std::collections::BTreeMap;
use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{event, milli, oracle_jsonl, random_events, World, PROGRAM, PROGRAM_VERSION};
use dds_core::aggregation::{
    derived_path, execute, publish_result, AggregationError, AggregationRequest, ExecuteOptions,
    OutputFormat, PluginSpec, Sink,
};
use dds_core::index::QueryFilter;
use dds_core::pmd::{provenance_trace, AdapterKind, DatasetKind, EasEvent, TxBody};
use dds_core::sha256;
use dds_core::storage::StorageAdapter;

fn facility(f: &str) -> QueryFilter {
    QueryFilter {
        facility_id: Some(f.into()),
        ..Default::default()
    }
}

fn local_request(
    dir: &tempfile::TempDir,
    filter: QueryFilter,
    pipeline: Vec<PluginSpec>,
) -> AggregationRequest {
    AggregationRequest {
        filter,
        pipeline,
        sink: Sink::LocalPath {
            path: dir.path().join("out.jsonl").to_string_lossy().into_owned(),
        },
    }
}

fn spec(name: &str, params: &[(&str, &str)]) -> PluginSpec {
    PluginSpec {
        name: name.into(),
        parameters: params
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
    }
}

/// Events of every matched dataset, in query order then file order.
fn oracle_concat(world: &World, filter: &QueryFilter) -> Vec<(String, EasEvent)> {
    let index = world.index();
    let mut out = Vec::new();
    for d in index.query(filter).unwrap() {
        let adapter = world
            .adapters
            .iter()
            .find(|a| a.storage_id() == d.storage_id)
            .unwrap();
        for f in &d.file_refs {
            for e in adapter.read_events(&f.path).unwrap() {
                out.push((d.dataset_id.clone(), e));
            }
        }
    }
    out
}

fn oracle_pipeline(input: Vec<(String, EasEvent)>, threshold: Option<&str>) -> Vec<EasEvent> {
    let mut v = input;
    v.sort_by(|a, b| {
        (a.1.registration_time, &a.0, &a.1.event_id).cmp(&(
            b.1.registration_time,
            &b.0,
            &b.1.event_id,
        ))
    });
    v.into_iter()
        .map(|(_, e)| e)
        .filter(|e| match threshold {
            None => true,
            Some(t) => e
                .energy_estimate
                .as_ref()
                .is_some_and(|x| milli(x.as_str()) >= milli(t)),
        })
        .collect()
}

fn two_storage_world(rng: &mut ChaCha8Rng) -> World {
    let mut w = World::new(&[AdapterKind::Jsonl, AdapterKind::Packed]);
    let files = |rng: &mut ChaCha8Rng, p: &str, t0| {
        (0..rng.gen_range(1..4))
            .map(|i| {
                let n = rng.gen_range(0..40);
                random_events(rng, &format!("{p}{i}"), n, t0)
            })
            .collect::<Vec<_>>()
    };
    let a = files(rng, "a", 1_000);
    let b = files(rng, "b", 1_010);
    let c = files(rng, "c", 5_000);
    w.publish_primary(0, "ds-a", "TAIGA", &a);
    w.publish_primary(1, "ds-b", "TAIGA", &b);
    w.publish_primary(1, "ds-c", "KASCADE", &c);
    w.commit();
    w
}

#[test]
fn empty_match_is_success() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = two_storage_world(&mut rng);
    let out = tempfile::TempDir::new().unwrap();
    let req = local_request(&out, facility("NOWHERE"), vec![]);
    let ex = execute(
        &req,
        &w.index(),
        &w.storage_set(),
        &ExecuteOptions::default(),
    )
    .unwrap();
    assert!(ex.result.datasets.is_empty());
    assert_eq!(ex.result.events_out, 0);
    assert_eq!(fs::read(out.path().join("out.jsonl")).unwrap(), b"");
    assert_eq!(ex.result.output_digest, sha256(b""));
}

#[test]
fn raw_fetch_matches_sequential_oracle() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = two_storage_world(&mut rng);
        let filter = facility("TAIGA");
        let out = tempfile::TempDir::new().unwrap();
        let req = local_request(&out, filter.clone(), vec![]);
        let concurrent = execute(
            &req,
            &w.index(),
            &w.storage_set(),
            &ExecuteOptions::default(),
        )
        .unwrap();
        let bytes = fs::read(out.path().join("out.jsonl")).unwrap();
        let expected: Vec<EasEvent> = oracle_concat(&w, &filter)
            .into_iter()
            .map(|(_, e)| e)
            .collect();
        assert_eq!(bytes, oracle_jsonl(&expected));
        assert_eq!(concurrent.result.datasets, vec!["ds-a", "ds-b"]);

        let sequential = execute(
            &req,
            &w.index(),
            &w.storage_set(),
            &ExecuteOptions {
                concurrent_fetch: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(fs::read(out.path().join("out.jsonl")).unwrap(), bytes);
        assert_eq!(sequential.result, concurrent.result);
    }
}

#[test]
fn merge_then_energy_filter_matches_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let w = two_storage_world(&mut rng);
        let theta = format!("{}.{:03}", rng.gen_range(0..5), rng.gen_range(0..1000));
        let filter = QueryFilter {
            time_range: Some(dds_core::pmd::TimeRange {
                start: 0,
                end: u64::MAX,
            }),
            ..Default::default()
        };
        let out = tempfile::TempDir::new().unwrap();
        let req = local_request(
            &out,
            filter.clone(),
            vec![
                spec("time_ordered_merge", &[]),
                spec("energy_filter", &[("threshold", &theta)]),
            ],
        );
        let ex = execute(
            &req,
            &w.index(),
            &w.storage_set(),
            &ExecuteOptions::default(),
        )
        .unwrap();
        let input = oracle_concat(&w, &filter);
        let expected = oracle_pipeline(input.clone(), Some(&theta));
        assert_eq!(
            fs::read(out.path().join("out.jsonl")).unwrap(),
            oracle_jsonl(&expected)
        );

        let r = &ex.result;
        assert_eq!(r.events_in, input.len() as u64);
        assert_eq!(r.events_out, expected.len() as u64);
        let filter_stage = &r.stages[1];
        let dropped: u64 = filter_stage.counters.values().sum();
        assert_eq!(filter_stage.events_in, dropped + filter_stage.events_out);
        let missing = input
            .iter()
            .filter(|(_, e)| e.energy_estimate.is_none())
            .count() as u64;
        assert_eq!(
            filter_stage
                .counters
                .get("dropped_missing_energy")
                .copied()
                .unwrap_or(0),
            missing
        );
        assert!(r.peak_buffered_events <= r.window);
        assert!(r.peak_buffered_events as u64 <= r.events_in.max(1));
    }
}

#[test]
fn window_smaller_than_stream_count_fails() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = two_storage_world(&mut rng);
    let out = tempfile::TempDir::new().unwrap();
    let req = local_request(
        &out,
        facility("TAIGA"),
        vec![spec("time_ordered_merge", &[])],
    );
    let err = execute(
        &req,
        &w.index(),
        &w.storage_set(),
        &ExecuteOptions {
            window: 1,
            ..Default::default()
        },
    )
    .unwrap_err();
    assert_eq!(err.name(), "WindowExceeded");
    assert!(!out.path().join("out.jsonl").exists());
    assert!(!out.path().join("out.jsonl.partial").exists());
}

#[test]
fn tampered_file_aborts_before_plugins() {
    let mut w = World::new(&[AdapterKind::Jsonl, AdapterKind::Jsonl]);
    w.publish_primary(0, "good", "TAIGA", &[vec![event("e1", 10, Some("1"))]]);
    w.publish_primary(1, "bad", "TAIGA", &[vec![event("e2", 20, Some("2"))]]);
    w.commit();
    let target = w.dirs[1].path().join("bad/part-0.jsonl");
    let mut bytes = fs::read(&target).unwrap();
    bytes[5] ^= 0x01;
    fs::write(&target, bytes).unwrap();

    let out = tempfile::TempDir::new().unwrap();
    let req = local_request(
        &out,
        facility("TAIGA"),
        vec![spec("time_ordered_merge", &[])],
    );
    let err = execute(
        &req,
        &w.index(),
        &w.storage_set(),
        &ExecuteOptions::default(),
    )
    .unwrap_err();
    match err {
        AggregationError::Integrity { file, .. } => assert_eq!(file, "s1/bad/part-0.jsonl"),
        other => panic!("unexpected {other}"),
    }
    assert!(!out.path().join("out.jsonl").exists());
}

#[test]
fn unsorted_file_names_stream() {
    let mut w = World::new(&[AdapterKind::Jsonl]);
    w.publish_primary(
        0,
        "ds",
        "TAIGA",
        &[vec![event("b", 20, None), event("a", 10, None)]],
    );
    w.commit();
    let out = tempfile::TempDir::new().unwrap();
    let req = local_request(
        &out,
        facility("TAIGA"),
        vec![spec("time_ordered_merge", &[])],
    );
    let err = execute(
        &req,
        &w.index(),
        &w.storage_set(),
        &ExecuteOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, AggregationError::UnsortedInput(ref s) if s == "s0/ds/part-0.jsonl"));
    assert!(!out.path().join("out.jsonl.partial").exists());
}

#[test]
fn archive_mode_packs_fetched_files() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = two_storage_world(&mut rng);
    let out = tempfile::TempDir::new().unwrap();
    let req = local_request(&out, facility("TAIGA"), vec![spec("merge_archive", &[])]);
    let ex = execute(
        &req,
        &w.index(),
        &w.storage_set(),
        &ExecuteOptions::default(),
    )
    .unwrap();
    assert_eq!(ex.result.output_format, OutputFormat::Tar);
    let bytes = fs::read(out.path().join("out.jsonl")).unwrap();
    let mut archive = tar::Archive::new(&bytes[..]);
    let mut names = Vec::new();
    for entry in archive.entries().unwrap() {
        let mut entry = entry.unwrap();
        let name = entry.path().unwrap().to_string_lossy().into_owned();
        let mut data = Vec::new();
        std::io::Read::read_to_end(&mut entry, &mut data).unwrap();
        let (storage, path) = name.split_once('/').unwrap();
        let idx: usize = storage[1..].parse().unwrap();
        assert_eq!(data, w.adapters[idx].get_file(path).unwrap().0);
        names.push(name);
    }
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert_eq!(names.len(), ex.result.files_fetched);
}

fn publish_request(filter: QueryFilter, dataset_id: &str, program: &str) -> AggregationRequest {
    AggregationRequest {
        filter,
        pipeline: vec![
            spec("time_ordered_merge", &[]),
            spec("energy_filter", &[("threshold", "1.0")]),
        ],
        sink: Sink::Publish {
            storage_id: "s1".into(),
            dataset_id: dataset_id.into(),
            program_id: program.into(),
            program_version: PROGRAM_VERSION.into(),
        },
    }
}

#[test]
fn publish_derivation_with_two_parents() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut w = two_storage_world(&mut rng);
    let req = publish_request(facility("TAIGA"), "derived-1", PROGRAM);
    let storages = w.storage_set();
    let ex = execute(&req, &w.index(), &storages, &ExecuteOptions::default()).unwrap();
    let key = w.key.clone();
    let tx = publish_result(&ex, &req, &storages, &key, &mut w.chain, 99).unwrap();
    match &tx.body {
        TxBody::DeriveDataset {
            dataset,
            parent_dataset_ids,
            parameters_hash,
            ..
        } => {
            assert_eq!(
                parent_dataset_ids,
                &vec!["ds-a".to_string(), "ds-b".to_string()]
            );
            assert_eq!(*parameters_hash, req.parameters_hash());
            assert_eq!(dataset.kind, DatasetKind::Secondary);
            let stored = w.adapters[1]
                .read_events(&dataset.file_refs[0].path)
                .unwrap();
            assert_eq!(stored.len() as u64, ex.result.events_out);
        }
        other => panic!("unexpected body {other:?}"),
    }
    w.commit();
    let dag = provenance_trace("derived-1", w.chain.registry()).unwrap();
    assert_eq!(dag.parents_of("derived-1").len(), 2);
    let index = w.index();
    let derived = index
        .query(&QueryFilter {
            descendant_of: Some("ds-a".into()),
            ..Default::default()
        })
        .unwrap();
    assert_eq!(derived.len(), 1);
    assert_eq!(derived[0].dataset_id, "derived-1");

    let again = execute(&req, &w.index(), &storages, &ExecuteOptions::default()).unwrap();
    let err = publish_result(&again, &req, &storages, &key, &mut w.chain, 100).unwrap_err();
    assert_eq!(err.name(), "DuplicateDataset");
}

#[test]
fn publish_unknown_program_writes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = two_storage_world(&mut rng);
    let req = publish_request(facility("TAIGA"), "derived-x", "not-registered");
    let err = execute(
        &req,
        &w.index(),
        &w.storage_set(),
        &ExecuteOptions::default(),
    )
    .unwrap_err();
    assert_eq!(err.name(), "UnknownProgram");
    assert!(!w.dirs[1].path().join("derived").exists());
}

#[test]
fn publish_write_failure_submits_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut w = two_storage_world(&mut rng);
    let req = publish_request(facility("TAIGA"), "derived-2", PROGRAM);
    let storages = w.storage_set();
    let ex = execute(&req, &w.index(), &storages, &ExecuteOptions::default()).unwrap();
    w.adapters[1]
        .put_file(&derived_path("derived-2", AdapterKind::Packed), b"occupied")
        .unwrap();
    let pending_before = w.chain.pending().count();
    let key = w.key.clone();
    let err = publish_result(&ex, &req, &storages, &key, &mut w.chain, 7).unwrap_err();
    assert_eq!(err.name(), "AlreadyExists");
    assert_eq!(w.chain.pending().count(), pending_before);
}

#[test]
fn request_file_roundtrip() {
    let json = r#"{
        "filter": {"facility_id": "TAIGA", "energy_min": "1.5"},
        "pipeline": [{"name": "time_ordered_merge"}, {"name": "energy_filter", "parameters": {"threshold": "2"}}],
        "sink": {"type": "local_path", "path": "/tmp/out.jsonl"}
    }"#;
    let req: AggregationRequest = serde_json::from_str(json).unwrap();
    assert_eq!(req.pipeline.len(), 2);
    assert_eq!(
        req.pipeline[1].parameters,
        BTreeMap::from([("threshold".into(), "2".into())])
    );
    let back: AggregationRequest =
        serde_json::from_str(&serde_json::to_string(&req).unwrap()).unwrap();
    assert_eq!(back, req);
}
