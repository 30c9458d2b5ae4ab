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

//! Simulated handler networks.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use dds_core::chain::{store, OrderingMode};
use dds_core::netsim::{run, SimConfig};

use crate::error::{CliError, CliResult};
use crate::home::{read_json, write, Home};
use crate::SimArgs;

pub fn sim_run(
    args: &SimArgs,
    ordering: OrderingMode,
    export: Option<(Home, String)>,
) -> CliResult {
    let config = match &args.config {
        Some(path) => read_json::<SimConfig>(path, "ConfigError")?,
        None => SimConfig::generate(args.seed, args.handlers, args.slots, ordering),
    };
    if let Some(path) = &args.write_config {
        let text = serde_json::to_vec_pretty(&config).expect("config serializes");
        write(path, &text)?;
    }
    let trace = run(&config)?;
    if let Some(path) = &args.trace {
        write(path, &trace.to_jsonl())?;
    }
    if let Some((home, node)) = export {
        let report = trace
            .node(&node)
            .ok_or_else(|| CliError::usage(format!("no handler named {node:?}")))?;
        let dir = home.chain_dir();
        if dir.join(store::GENESIS_FILE).exists() {
            return Err(CliError::invalid(
                "AlreadyExists",
                format!("{} already has a chain", dir.display()),
            ));
        }
        store::save(dir, &report.state)?;
        eprintln!(
            "exported {} blocks of {node} to {}",
            report.state.height(),
            dir.display()
        );
    }

    let heads: BTreeMap<&str, String> = trace
        .nodes
        .iter()
        .map(|n| (n.handler_id.as_str(), n.state.head_hash().to_hex()))
        .collect();
    let honest_heads: BTreeSet<_> = trace.honest().map(|n| n.state.head_hash()).collect();
    let evidence: BTreeMap<&str, usize> = trace
        .nodes
        .iter()
        .map(|n| (n.handler_id.as_str(), n.evidence.len()))
        .collect();
    let audit_failures: BTreeMap<&str, usize> = trace
        .nodes
        .iter()
        .map(|n| (n.handler_id.as_str(), n.audit_failures.len()))
        .collect();
    let heights: BTreeMap<&str, u64> = trace
        .nodes
        .iter()
        .map(|n| (n.handler_id.as_str(), n.state.height()))
        .collect();
    eprintln!(
        "{} handlers, {} slots, {} trace events, honest nodes {}",
        trace.nodes.len(),
        config.duration_slots,
        trace.events.len(),
        if honest_heads.len() == 1 {
            "converged"
        } else {
            "diverged"
        }
    );
    println!(
        "{}",
        json!({
            "seed": config.seed,
            "converged": honest_heads.len() == 1,
            "heads": heads,
            "heights": heights,
            "evidence": evidence,
            "audit_failures": audit_failures,
            "event_counts": trace.event_counts(),
        })
    );
    Ok(())
}
