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

//! `dds`: operator and researcher entry point to the registry.

mod chain_cmd;
mod data_cmd;
mod error;
mod home;
mod sim_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dds_core::chain::OrderingMode;
use dds_core::pmd::AdapterKind;

use error::{CliError, CliResult};
use home::Home;

#[derive(Debug, Parser)]
#[command(
    name = "dds",
    version,
    about = "Distributed data storage registry tool"
)]
struct Cli {
    /// State directory holding keys/, chain/ and pool/.
    #[arg(long, global = true, value_name = "DIR")]
    home: Option<PathBuf>,
    /// Chain directory; defaults to HOME/chain.
    #[arg(long, global = true, value_name = "DIR")]
    chain: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a named Ed25519 key pair under HOME/keys.
    Keygen {
        #[arg(long)]
        name: String,
        /// Derive the key deterministically from this seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write genesis.json for a handler roster.
    GenesisInit(GenesisArgs),
    /// Run a simulated handler network and print its summary.
    SimRun(SimArgs),
    /// Sign a transaction body and add it to the pending pool.
    TxSubmit {
        #[arg(long)]
        key: String,
        /// JSON transaction body.
        #[arg(long, value_name = "FILE")]
        body: PathBuf,
        #[arg(long)]
        created_at: Option<u64>,
    },
    /// Produce the block for a slot from the pending pool.
    Produce {
        #[arg(long)]
        key: String,
        /// Defaults to the next slot after the head assigned to this key.
        #[arg(long)]
        slot: Option<u64>,
        /// Defaults to the start of the slot.
        #[arg(long)]
        timestamp: Option<u64>,
    },
    /// Replay and validate the chain.
    ChainVerify {
        /// Also prove the registry at the head extends this checkpoint.
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Also fetch every registered file and check its digest.
        #[arg(long)]
        files: bool,
    },
    /// Emit checkpoints and Merkle proofs.
    #[command(subcommand)]
    Proof(ProofCommand),
    /// Build the query index and write its snapshot.
    IndexBuild {
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Print matching dataset descriptors as JSON lines.
    Query {
        /// Predicate K=V or K=LO..HI; repeatable.
        #[arg(long = "where", value_name = "K=V")]
        predicates: Vec<String>,
    },
    /// Print the provenance graph of a dataset.
    Provenance {
        #[arg(long)]
        dataset: String,
    },
    /// Run an aggregation request.
    Aggregate {
        #[arg(long, value_name = "FILE")]
        request: PathBuf,
        /// Signing key, required for publish sinks.
        #[arg(long)]
        key: Option<String>,
        #[arg(long)]
        created_at: Option<u64>,
        /// Fetch storages one after another instead of concurrently.
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Store a primary dataset and submit its publication.
    Publish(PublishArgs),
    /// Create a storage directory and submit its registration.
    StorageInit {
        #[arg(long)]
        key: String,
        #[arg(long)]
        id: String,
        #[arg(long)]
        kind: AdapterKind,
        #[arg(long, value_name = "DIR")]
        dir: PathBuf,
        #[arg(long)]
        created_at: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct GenesisArgs {
    /// Handler whose key is HOME/keys/NAME; repeatable, roster order.
    #[arg(long = "handler", value_name = "NAME")]
    handlers: Vec<String>,
    /// Handler given as ID=PUBKEY_HEX; appended after --handler entries.
    #[arg(long = "handler-key", value_name = "ID=HEX")]
    handler_keys: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    slot_ms: u64,
    #[arg(long, default_value = "fixed")]
    ordering: String,
    /// Nanoseconds since the epoch; defaults to now.
    #[arg(long)]
    genesis_time: Option<u64>,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Full simulation config; overrides the generator flags.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    handlers: usize,
    #[arg(long, default_value_t = 20)]
    slots: u64,
    #[arg(long, default_value = "fixed")]
    ordering: String,
    /// Write the event trace as JSON lines.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Write the effective config.
    #[arg(long, value_name = "FILE")]
    write_config: Option<PathBuf>,
    /// Write this node's final chain to the chain directory.
    #[arg(long, value_name = "HANDLER")]
    export_node: Option<String>,
}

#[derive(Debug, Args)]
struct PublishArgs {
    #[arg(long)]
    key: String,
    #[arg(long)]
    storage: String,
    #[arg(long)]
    dataset_id: String,
    #[arg(long)]
    facility: String,
    /// Events as JSON lines, sorted by time.
    #[arg(long, value_name = "FILE")]
    events: PathBuf,
    /// Detector geometry blob; its SHA-256 is recorded.
    #[arg(long, value_name = "FILE")]
    geometry: PathBuf,
    #[arg(long)]
    created_at: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum ProofCommand {
    /// Current checkpoint of the chain head.
    Checkpoint,
    /// Inclusion of a confirmed transaction in the registry log.
    Inclusion {
        #[arg(long)]
        tx: String,
    },
    /// Consistency of an earlier registry size with the head.
    Consistency {
        #[arg(long, conflicts_with = "checkpoint")]
        old_size: Option<u64>,
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
    },
}

fn parse_ordering(s: &str) -> CliResult<OrderingMode> {
    match s {
        "fixed" => Ok(OrderingMode::Fixed),
        "reshuffled" => Ok(OrderingMode::Reshuffled),
        other => Err(CliError::usage(format!("unknown ordering {other:?}"))),
    }
}

fn run(cli: Cli) -> CliResult {
    let home = || Home::new(cli.home.clone(), cli.chain.clone());
    match cli.command {
        Command::Keygen { name, seed } => chain_cmd::keygen(&home()?, &name, seed),
        Command::GenesisInit(args) => chain_cmd::genesis_init(
            &home()?,
            &args.handlers,
            &args.handler_keys,
            args.slot_ms,
            parse_ordering(&args.ordering)?,
            args.genesis_time,
        ),
        Command::SimRun(args) => {
            let ordering = parse_ordering(&args.ordering)?;
            let export = match &args.export_node {
                Some(node) => Some((home()?, node.clone())),
                None => None,
            };
            sim_cmd::sim_run(&args, ordering, export)
        }
        Command::TxSubmit {
            key,
            body,
            created_at,
        } => chain_cmd::tx_submit(&home()?, &key, &body, created_at),
        Command::Produce {
            key,
            slot,
            timestamp,
        } => chain_cmd::produce(&home()?, &key, slot, timestamp),
        Command::ChainVerify { checkpoint, files } => {
            chain_cmd::chain_verify(&home()?, checkpoint.as_deref(), files)
        }
        Command::Proof(cmd) => chain_cmd::proof(&home()?, cmd),
        Command::IndexBuild { out } => data_cmd::index_build(&home()?, out.as_deref()),
        Command::Query { predicates } => data_cmd::query(&home()?, &predicates),
        Command::Provenance { dataset } => data_cmd::provenance(&home()?, &dataset),
        Command::Aggregate {
            request,
            key,
            created_at,
            sequential,
            window,
        } => data_cmd::aggregate(
            &home()?,
            &request,
            key.as_deref(),
            created_at,
            !sequential,
            window,
        ),
        Command::Publish(args) => data_cmd::publish(&home()?, &args),
        Command::StorageInit {
            key,
            id,
            kind,
            dir,
            created_at,
        } => data_cmd::storage_init(&home()?, &key, &id, kind, &dir, created_at),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let message = e.kind().to_string();
            eprintln!("{}", CliError::usage(message).json_line());
            return error::Class::Usage.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.json_line());
            e.class.exit_code()
        }
    }
}
