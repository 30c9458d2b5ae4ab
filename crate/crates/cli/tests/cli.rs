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

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TAIGA_EVENTS: &str = concat!(
    r#"{"event_id":"a1","registration_time":100,"facility_id":"TAIGA","detector_id":"d","signal_histogram":[1,2],"bin_width":10,"energy_estimate":"1.5"}"#,
    "\n",
    r#"{"event_id":"a2","registration_time":150,"facility_id":"TAIGA","detector_id":"d","signal_histogram":[3],"bin_width":10}"#,
    "\n",
    r#"{"event_id":"a3","registration_time":180,"facility_id":"TAIGA","detector_id":"d","signal_histogram":[4,4],"bin_width":10,"energy_estimate":"3"}"#,
    "\n",
);

const KASCADE_EVENTS: &str = concat!(
    r#"{"event_id":"b1","registration_time":120,"facility_id":"KASCADE","detector_id":"k","signal_histogram":[1],"bin_width":5,"energy_estimate":"0.2"}"#,
    "\n",
    r#"{"event_id":"b2","registration_time":150,"facility_id":"KASCADE","detector_id":"k","signal_histogram":[9],"bin_width":5,"energy_estimate":"0.75"}"#,
    "\n",
);

/// Merge + filter(threshold 0.5) of the two fixtures, computed with a
/// separate JSON implementation.
const GOLDEN_MERGED_DIGEST: &str =
    "841f02465a490bd44cd1bb388d0e0436f6ce05f546a6aa018407856835c740fb";

struct Env {
    dir: TempDir,
}

impl Env {
    fn new() -> Self {
        Env {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn write(&self, rel: &str, contents: &str) -> PathBuf {
        let p = self.path(rel);
        fs::write(&p, contents).unwrap();
        p
    }

    fn dds(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_dds"))
            .current_dir(self.dir.path())
            .arg("--home")
            .arg("home")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.dds(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    /// Handler `op`, storages s0 (jsonl) and s1 (packed), program agg@1,
    /// primary datasets p1 (TAIGA on s0) and p2 (KASCADE on s1); two blocks.
    fn registry() -> Self {
        let env = Env::new();
        env.ok(&["keygen", "--name", "op", "--seed", "1"]);
        env.ok(&[
            "genesis-init",
            "--handler",
            "op",
            "--genesis-time",
            "1000000000",
        ]);
        env.ok(&[
            "storage-init",
            "--key",
            "op",
            "--id",
            "s0",
            "--kind",
            "jsonl",
            "--dir",
            "st0",
            "--created-at",
            "1",
        ]);
        env.ok(&[
            "storage-init",
            "--key",
            "op",
            "--id",
            "s1",
            "--kind",
            "packed",
            "--dir",
            "st1",
            "--created-at",
            "2",
        ]);
        env.write(
            "prog.json",
            &format!(
                r#"{{"type":"register_program","program_id":"agg","version":"1","code_hash":"{}"}}"#,
                "ab".repeat(32)
            ),
        );
        env.ok(&[
            "tx-submit",
            "--key",
            "op",
            "--body",
            "prog.json",
            "--created-at",
            "3",
        ]);
        env.ok(&["produce", "--key", "op"]);
        env.write("taiga.jsonl", TAIGA_EVENTS);
        env.write("kascade.jsonl", KASCADE_EVENTS);
        env.write("geo.bin", "geometry");
        env.ok(&[
            "publish",
            "--key",
            "op",
            "--storage",
            "s0",
            "--dataset-id",
            "p1",
            "--facility",
            "TAIGA",
            "--events",
            "taiga.jsonl",
            "--geometry",
            "geo.bin",
            "--created-at",
            "4",
        ]);
        env.ok(&[
            "publish",
            "--key",
            "op",
            "--storage",
            "s1",
            "--dataset-id",
            "p2",
            "--facility",
            "KASCADE",
            "--events",
            "kascade.jsonl",
            "--geometry",
            "geo.bin",
            "--created-at",
            "5",
        ]);
        env.ok(&["produce", "--key", "op"]);
        env
    }
}

fn last_error(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr has a final line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

fn lines(stdout: &str) -> Vec<Value> {
    stdout
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn sha256_file(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

#[test]
fn honest_chain_verifies_and_prints_head() {
    let env = Env::registry();
    let out = lines(&env.ok(&["chain-verify"]));
    assert_eq!(out.len(), 3);
    assert_eq!(out[0]["verdict"], "ok");
    assert_eq!(out[1]["verdict"], "ok");
    assert_eq!(out[2]["status"], "ok");
    assert_eq!(out[2]["registry_size"], 5);
    assert_eq!(out[2]["head_hash"], out[1]["hash"]);
}

#[test]
fn mutated_transaction_fails_at_its_height() {
    let env = Env::registry();
    let block = env.path("home/chain/block_1.json");
    let text = fs::read_to_string(&block).unwrap();
    // Same-width edit keeps the file canonical.
    let mutated = text.replacen("\"created_at\":4", "\"created_at\":9", 1);
    assert_ne!(text, mutated);
    fs::write(&block, mutated).unwrap();
    let out = env.dds(&["chain-verify"]);
    assert_eq!(out.status.code(), Some(3));
    let verdicts = lines(&String::from_utf8(out.stdout.clone()).unwrap());
    let failing = verdicts.last().unwrap();
    assert!(failing["height"].as_u64().unwrap() <= 1);
    assert_eq!(failing["verdict"], "BadTxRoot");
    assert_eq!(last_error(&out)["error"], "BadTxRoot");
}

#[test]
fn stale_checkpoint_is_consistent_with_head() {
    let env = Env::registry();
    let cp = env.ok(&["proof", "checkpoint"]);
    env.write("cp.json", &cp);
    env.write(
        "prog2.json",
        &format!(
            r#"{{"type":"register_program","program_id":"agg","version":"2","code_hash":"{}"}}"#,
            "cd".repeat(32)
        ),
    );
    env.ok(&[
        "tx-submit",
        "--key",
        "op",
        "--body",
        "prog2.json",
        "--created-at",
        "6",
    ]);
    env.ok(&["produce", "--key", "op"]);
    let out = lines(&env.ok(&["chain-verify", "--checkpoint", "cp.json"]));
    let report = out.iter().find(|v| v.get("checkpoint").is_some()).unwrap();
    assert_eq!(report["checkpoint"], "consistent");
    assert_eq!(report["old_size"], 5);
    assert_eq!(report["new_size"], 6);

    let proof = lines(&env.ok(&["proof", "consistency", "--checkpoint", "cp.json"]));
    let old: Value = serde_json::from_str(&cp).unwrap();
    assert_eq!(proof[0]["old_root"], old["registry_root"]);
}

#[test]
fn forged_checkpoint_is_rejected() {
    let env = Env::registry();
    let cp = env.ok(&["proof", "checkpoint"]);
    let forged = cp.replacen("\"registry_size\":5", "\"registry_size\":4", 1);
    env.write("cp.json", &forged);
    let out = env.dds(&["chain-verify", "--checkpoint", "cp.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(last_error(&out)["error"], "ConsistencyError");
}

#[test]
fn inclusion_proof_for_confirmed_tx() {
    let env = Env::registry();
    let block: Value =
        serde_json::from_slice(&fs::read(env.path("home/chain/block_1.json")).unwrap()).unwrap();
    let tx_id = block["transactions"][0]["tx_id"].as_str().unwrap();
    let out = lines(&env.ok(&["proof", "inclusion", "--tx", tx_id]));
    assert_eq!(out[0]["proof"]["leaf_index"], 3);
    assert_eq!(out[0]["proof"]["tree_size"], 5);
    let missing = env.dds(&["proof", "inclusion", "--tx", &"00".repeat(32)]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(last_error(&missing)["error"], "NotFound");
}

#[test]
fn query_by_facility_and_time() {
    let env = Env::registry();
    let taiga = lines(&env.ok(&["query", "--where", "facility=TAIGA"]));
    assert_eq!(taiga.len(), 1);
    assert_eq!(taiga[0]["dataset_id"], "p1");
    assert_eq!(taiga[0]["time_range"]["start"], 100);

    // p1 spans [100, 180] and p2 spans [120, 150].
    let cases = [
        ((100, 200), vec!["p1", "p2"]),
        ((160, 170), vec!["p1"]),
        ((0, 99), vec![]),
    ];
    for ((lo, hi), expected) in cases {
        let q = format!("time={lo}..{hi}");
        let ids: Vec<String> = lines(&env.ok(&["query", "--where", &q]))
            .iter()
            .map(|d| d["dataset_id"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(ids, expected, "{q}");
    }
    let both = lines(&env.ok(&[
        "query",
        "--where",
        "energy=0.5..1",
        "--where",
        "kind=primary",
    ]));
    assert_eq!(both.len(), 1);
    assert_eq!(both[0]["dataset_id"], "p2");
}

#[test]
fn query_usage_errors() {
    let env = Env::registry();
    for args in [
        vec!["query"],
        vec!["query", "--where", "facility"],
        vec!["query", "--where", "time=5"],
        vec!["query", "--where", "time=9..1"],
        vec!["query", "--where", "colour=red"],
        vec!["query", "--where", "energy_min=-1"],
    ] {
        let out = env.dds(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = last_error(&out);
        assert!(
            err["error"] == "UsageError" || err["error"] == "InvalidFilter",
            "{err}"
        );
    }
}

#[test]
fn aggregate_matches_golden_digest() {
    let env = Env::registry();
    env.write(
        "req.json",
        r#"{"filter":{"time_range":{"start":0,"end":1000}},
            "pipeline":[{"name":"time_ordered_merge"},{"name":"energy_filter","parameters":{"threshold":"0.5"}}],
            "sink":{"type":"local_path","path":"merged.jsonl"}}"#,
    );
    let out = lines(&env.ok(&["aggregate", "--request", "req.json"]));
    assert_eq!(out[0]["datasets"], serde_json::json!(["p1", "p2"]));
    assert_eq!(out[0]["events_in"], 5);
    assert_eq!(out[0]["events_out"], 3);
    assert_eq!(sha256_file(&env.path("merged.jsonl")), GOLDEN_MERGED_DIGEST);
    assert_eq!(out[0]["output_digest"], GOLDEN_MERGED_DIGEST);

    fs::remove_file(env.path("merged.jsonl")).unwrap();
    env.ok(&["aggregate", "--request", "req.json", "--sequential"]);
    assert_eq!(sha256_file(&env.path("merged.jsonl")), GOLDEN_MERGED_DIGEST);
}

#[test]
fn aggregate_matching_nothing_is_empty() {
    let env = Env::registry();
    env.write(
        "req.json",
        r#"{"filter":{"facility_id":"NOWHERE"},"sink":{"type":"local_path","path":"out.jsonl"}}"#,
    );
    let out = env.dds(&["aggregate", "--request", "req.json"]);
    assert!(out.status.success());
    let summary = lines(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(summary[0]["datasets"], serde_json::json!([]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("matched 0 datasets"));
    assert_eq!(fs::read(env.path("out.jsonl")).unwrap(), b"");
}

#[test]
fn aggregate_unknown_plugin() {
    let env = Env::registry();
    env.write(
        "req.json",
        r#"{"filter":{"facility_id":"TAIGA"},"pipeline":[{"name":"nope"}],"sink":{"type":"local_path","path":"out.jsonl"}}"#,
    );
    let out = env.dds(&["aggregate", "--request", "req.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(last_error(&out)["error"], "PluginNotFound");
    assert!(!env.path("out.jsonl").exists());
}

#[test]
fn publish_derivation_then_tamper_fails_verification() {
    let env = Env::registry();
    env.write(
        "req.json",
        r#"{"filter":{"time_range":{"start":0,"end":1000}},
            "pipeline":[{"name":"time_ordered_merge"}],
            "sink":{"type":"publish","storage_id":"s0","dataset_id":"d1","program_id":"agg","program_version":"1"}}"#,
    );
    let out = env.dds(&["aggregate", "--request", "req.json"]);
    assert_eq!(out.status.code(), Some(2));

    let out = lines(&env.ok(&[
        "aggregate",
        "--request",
        "req.json",
        "--key",
        "op",
        "--created-at",
        "7",
    ]));
    assert_eq!(out[1]["dataset_id"], "d1");
    env.ok(&["produce", "--key", "op"]);

    let dag = lines(&env.ok(&["provenance", "--dataset", "d1"]));
    let edges = dag[0]["edges"].as_array().unwrap();
    assert_eq!(edges.len(), 2);
    let parents: Vec<&str> = edges
        .iter()
        .map(|e| e["parent"].as_str().unwrap())
        .collect();
    assert_eq!(parents, ["p1", "p2"]);
    for e in edges {
        assert_eq!(e["program"]["version"], "1");
    }
    let verified = lines(&env.ok(&["chain-verify", "--files"]));
    assert!(verified.iter().any(|v| v["files_verified"] == 3));

    let rerun = env.dds(&["aggregate", "--request", "req.json", "--key", "op"]);
    assert_eq!(last_error(&rerun)["error"], "DuplicateDataset");

    let derived = env.path("st0/derived/d1.jsonl");
    let mut bytes = fs::read(&derived).unwrap();
    bytes[0] ^= 1;
    fs::write(&derived, bytes).unwrap();
    let out = env.dds(&["chain-verify", "--files"]);
    assert_eq!(out.status.code(), Some(3));
    let err = last_error(&out);
    assert_eq!(err["error"], "IntegrityError");
    assert!(err["message"]
        .as_str()
        .unwrap()
        .contains("s0/derived/d1.jsonl"));
}

#[test]
fn duplicate_program_submission_rejected() {
    let env = Env::registry();
    env.write(
        "dup.json",
        &format!(
            r#"{{"type":"register_program","program_id":"agg","version":"1","code_hash":"{}"}}"#,
            "ef".repeat(32)
        ),
    );
    let out = env.dds(&["tx-submit", "--key", "op", "--body", "dup.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(last_error(&out)["error"], "DuplicateProgram");
}

#[test]
fn produce_rejects_unscheduled_slot() {
    let env = Env::new();
    env.ok(&["keygen", "--name", "a", "--seed", "1"]);
    env.ok(&["keygen", "--name", "b", "--seed", "2"]);
    env.ok(&[
        "genesis-init",
        "--handler",
        "a",
        "--handler",
        "b",
        "--genesis-time",
        "0",
    ]);
    let out = env.dds(&["produce", "--key", "b", "--slot", "0"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(last_error(&out)["error"], "NotScheduled");
    let b = lines(&env.ok(&["produce", "--key", "b"]));
    assert_eq!(b[0]["slot"], 1);
    assert_eq!(b[0]["height"], 0);
    let a = lines(&env.ok(&["produce", "--key", "a"]));
    assert_eq!(a[0]["slot"], 2);
    env.ok(&["chain-verify"]);
}

#[test]
fn sim_run_is_deterministic_and_exports_a_valid_chain() {
    let env = Env::new();
    let args = [
        "sim-run",
        "--seed",
        "3",
        "--handlers",
        "4",
        "--slots",
        "15",
        "--trace",
        "t1.jsonl",
    ];
    let first = env.ok(&args);
    let second = env.ok(&[
        "sim-run",
        "--seed",
        "3",
        "--handlers",
        "4",
        "--slots",
        "15",
        "--trace",
        "t2.jsonl",
    ]);
    assert_eq!(first, second);
    assert_eq!(
        fs::read(env.path("t1.jsonl")).unwrap(),
        fs::read(env.path("t2.jsonl")).unwrap()
    );
    let summary = lines(&first);
    assert_eq!(summary[0]["converged"], true);
    assert_eq!(summary[0]["heights"]["h0"], 15);

    env.ok(&[
        "sim-run",
        "--seed",
        "3",
        "--handlers",
        "4",
        "--slots",
        "15",
        "--write-config",
        "cfg.json",
        "--export-node",
        "h2",
    ]);
    let verified = lines(&env.ok(&["chain-verify"]));
    assert_eq!(verified.len(), 16);
    assert_eq!(verified[15]["head_hash"], summary[0]["heads"]["h2"]);
    let from_file = env.ok(&["sim-run", "--config", "cfg.json"]);
    assert_eq!(from_file, first);
}

#[test]
fn sim_run_bad_config() {
    let env = Env::new();
    env.write("cfg.json", r#"{"seed":1}"#);
    let out = env.dds(&["sim-run", "--config", "cfg.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(last_error(&out)["error"], "ConfigError");
    let out = env.dds(&["sim-run", "--handlers", "0"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn usage_and_io_exit_codes() {
    let env = Env::new();
    let out = env.dds(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(last_error(&out)["error"], "UsageError");

    let out = Command::new(env!("CARGO_BIN_EXE_dds"))
        .args(["chain-verify"])
        .current_dir(env.dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = env.dds(&["chain-verify"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(last_error(&out)["error"], "IoError");

    env.ok(&["keygen", "--name", "k"]);
    let out = env.dds(&["keygen", "--name", "k"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(last_error(&out)["error"], "AlreadyExists");

    let help = env.dds(&["--help"]);
    assert!(help.status.success());
}
