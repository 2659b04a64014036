//! The `chainpki` command line.
//!
//! Exit codes: 0 success or trusted; 10 no block; 11 unknown owner; 12 bad
//! signature; 13 insufficient proofs; 20 identity-provider transport failure;
//! 1 anything else (usage, I/O, invalid chain, rejected registration).
//!
//! Settings resolve as flag, then config file (`--config` or
//! `$CHAINPKI_CONFIG`, TOML), then built-in default. Config keys:
//! `chain_path`, `provider`, `provider_url`, `timeout_ms`, `min_valid_proofs`,
//! `required_proof_types` (comma-separated), `output`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::crypto::{self, generate_keypair};
use crate::identity::{
    serve_mock, IdentityProvider, MockProvider, ProviderConfig, ProviderKind, ServeOptions,
    DEFAULT_TIMEOUT_MS,
};
use crate::ledger::{validate_chain, Blockchain, LedgerError};
use crate::record::DeviceRecord;
use crate::simnet::{self, Scenario, SimConfig};
use crate::storage::{self, ChainLock};
use crate::verifier::{register_device, verify_device, TrustPolicy, VerifyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_TRANSPORT: i32 = 20;

pub const CONFIG_ENV: &str = "CHAINPKI_CONFIG";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

#[derive(Parser, Debug)]
#[command(
    name = "chainpki",
    version,
    about = "Ledger-backed PKI for device ownership"
)]
pub struct Cli {
    /// TOML config file
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Output format; json output is stable, text is for humans
    #[arg(long, global = true, value_enum)]
    output: Option<OutputFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a key pair as <out-dir>/<name>.pub and <out-dir>/<name>.key
    Keygen {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "id")]
        name: String,
        /// 32-byte seed as 64 hex characters, for reproducible keys
        #[arg(long)]
        seed: Option<String>,
        /// Overwrite existing key files
        #[arg(long)]
        force: bool,
    },
    /// Sign a device record with the owner's key and append it to the chain
    Register {
        #[arg(long)]
        chain: Option<PathBuf>,
        /// Owner private key file
        #[arg(long)]
        key: PathBuf,
        /// Device public key file
        #[arg(long)]
        device_key: PathBuf,
        #[arg(long)]
        node_id: String,
        #[arg(long)]
        owner: String,
        /// Create the chain with a genesis block if the file does not exist
        #[arg(long)]
        init: bool,
        #[arg(long, default_value_t = 0)]
        genesis_timestamp: u64,
        /// Block timestamp in seconds since the epoch (default: now)
        #[arg(long)]
        timestamp: Option<u64>,
    },
    /// Run ownership verification for a device
    Verify {
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long)]
        node_id: String,
        #[arg(long)]
        min_valid_proofs: Option<usize>,
        /// Comma-separated proof types that must each have a valid proof
        #[arg(long)]
        required_proof_types: Option<String>,
        #[arg(long, value_enum)]
        provider: Option<ProviderKind>,
        #[arg(long)]
        provider_url: Option<String>,
        #[arg(long)]
        timeout_ms: Option<u64>,
        /// Answer lookups from a local fixtures file instead of HTTP
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Inspect or validate a chain file
    Chain {
        #[command(subcommand)]
        action: ChainAction,
    },
    /// Serve fixtures over the lookup HTTP endpoint until interrupted
    MockServe {
        #[arg(long, default_value = "127.0.0.1:8787")]
        bind: String,
        #[arg(long)]
        fixtures: PathBuf,
    },
    /// Run a simulation scenario and write its report
    Sim {
        /// uc1_signature_verification | uc2_unreliable_proofs | uc3_key_rotation | convergence
        scenario: String,
        #[arg(long, default_value_t = 10)]
        nodes: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        gossip_rounds: usize,
        /// Report path (default: sim-<scenario>.json)
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum ChainAction {
    /// List blocks: index, node id, owner, shortened hash
    Inspect {
        #[arg(long)]
        chain: Option<PathBuf>,
    },
    /// Check linkage, timestamps and hashes of every block
    Validate {
        #[arg(long)]
        chain: Option<PathBuf>,
    },
}

/// Contents of the optional config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub chain_path: Option<PathBuf>,
    pub provider: Option<ProviderKind>,
    pub provider_url: Option<String>,
    pub timeout_ms: Option<u64>,
    pub min_valid_proofs: Option<usize>,
    pub required_proof_types: Option<String>,
    pub output: Option<OutputFormat>,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliConfig {
    pub chain_path: Option<PathBuf>,
    pub provider: ProviderConfig,
    pub policy: TrustPolicy,
    pub output: OutputFormat,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

fn fail(message: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_FAILURE, message)
}

impl From<LedgerError> for Failure {
    fn from(e: LedgerError) -> Self {
        fail(e)
    }
}

impl From<crypto::CryptoError> for Failure {
    fn from(e: crypto::CryptoError) -> Self {
        fail(e)
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            let code = match e.kind() {
                DisplayHelp | DisplayVersion => EXIT_OK,
                _ => EXIT_FAILURE,
            };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn file_config(cli: &Cli) -> Result<FileConfig, Failure> {
    match &cli.config {
        Some(path) => FileConfig::load(path).map_err(fail),
        None => Ok(FileConfig::default()),
    }
}

fn chain_path(flag: Option<PathBuf>, file: &FileConfig) -> Result<PathBuf, Failure> {
    flag.or_else(|| file.chain_path.clone())
        .ok_or_else(|| fail("no chain path: pass --chain or set chain_path in the config file"))
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    let file = file_config(&cli)?;
    let output = cli.output.or(file.output).unwrap_or_default();
    let w = |out: &mut dyn Write, s: String| {
        let _ = writeln!(out, "{s}");
    };
    match cli.command {
        Command::Keygen {
            out_dir,
            name,
            seed,
            force,
        } => {
            let seed = seed
                .map(|hex_seed| {
                    hex::decode(hex_seed.trim()).map_err(|e| fail(format!("--seed: {e}")))
                })
                .transpose()?;
            let pair = generate_keypair(seed.as_deref())?;
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| fail(format!("{}: {e}", out_dir.display())))?;
            let public_path = out_dir.join(format!("{name}.pub"));
            let private_path = out_dir.join(format!("{name}.key"));
            crypto::write_key_files(&pair, &public_path, &private_path, force)?;
            match output {
                OutputFormat::Text => w(
                    out,
                    format!(
                        "wrote {} and {}\nfingerprint {}",
                        public_path.display(),
                        private_path.display(),
                        pair.key_fingerprint
                    ),
                ),
                OutputFormat::Json => w(
                    out,
                    json!({
                        "public_key_path": public_path,
                        "private_key_path": private_path,
                        "public_key": pair.public_key.to_base64(),
                        "fingerprint": pair.key_fingerprint,
                    })
                    .to_string(),
                ),
            }
            Ok(EXIT_OK)
        }

        Command::Register {
            chain,
            key,
            device_key,
            node_id,
            owner,
            init,
            genesis_timestamp,
            timestamp,
        } => {
            let path = chain_path(chain, &file)?;
            let _lock = ChainLock::acquire(&path)?;
            let current = if path.exists() {
                storage::load_chain(&path)?
            } else if init {
                Blockchain::new(genesis_timestamp)
            } else {
                return Err(fail(format!(
                    "{} does not exist (use --init to create it)",
                    path.display()
                )));
            };
            validate_chain(&current)
                .map_err(|e| fail(format!("refusing to extend invalid chain: {e}")))?;
            let owner_key = crypto::read_private_key_file(&key)?;
            let device_pk = crypto::read_public_key_file(&device_key)?;
            let record = DeviceRecord::new(&node_id, &owner, &device_pk).map_err(fail)?;
            let timestamp = timestamp.unwrap_or_else(now);
            let next = register_device(&current, &owner_key, record, timestamp)?;
            storage::save_chain(&path, &next)?;
            let tip = next.tip();
            match output {
                OutputFormat::Text => w(
                    out,
                    format!(
                        "registered {node_id} at index {} ({})",
                        tip.meta.index, tip.hash
                    ),
                ),
                OutputFormat::Json => w(
                    out,
                    json!({"node_id": node_id, "index": tip.meta.index, "hash": tip.hash})
                        .to_string(),
                ),
            }
            Ok(EXIT_OK)
        }

        Command::Verify {
            chain,
            node_id,
            min_valid_proofs,
            required_proof_types,
            provider,
            provider_url,
            timeout_ms,
            fixtures,
        } => {
            let config = CliConfig {
                chain_path: Some(chain_path(chain, &file)?),
                provider: ProviderConfig {
                    kind: provider.or(file.provider).unwrap_or(ProviderKind::Keybase),
                    base_url: provider_url.or(file.provider_url.clone()),
                    timeout_ms: timeout_ms.or(file.timeout_ms).unwrap_or(DEFAULT_TIMEOUT_MS),
                    cache_ttl: Duration::ZERO,
                },
                policy: TrustPolicy {
                    min_valid_proofs: min_valid_proofs
                        .or(file.min_valid_proofs)
                        .unwrap_or(TrustPolicy::default().min_valid_proofs),
                    required_proof_types: required_proof_types
                        .or(file.required_proof_types.clone())
                        .map(|list| TrustPolicy::parse_proof_types(&list))
                        .unwrap_or_default(),
                },
                output,
            };
            let chain = storage::load_chain(config.chain_path.as_deref().expect("set above"))?;
            validate_chain(&chain).map_err(|e| fail(format!("chain is invalid: {e}")))?;
            let provider: Box<dyn IdentityProvider> = match fixtures {
                Some(path) => Box::new(MockProvider::from_fixtures(&path).map_err(fail)?),
                None => Box::new(config.provider.build().map_err(fail)?),
            };
            let outcome = verify_device(&chain, provider.as_ref(), &config.policy, &node_id)
                .map_err(|e| {
                    let code = if e.is_transport() {
                        EXIT_TRANSPORT
                    } else {
                        EXIT_FAILURE
                    };
                    match e {
                        VerifyError::Provider(inner) => Failure::new(code, inner),
                    }
                })?;
            match output {
                OutputFormat::Text => {
                    w(out, format!("{node_id}: {}", outcome.verdict));
                    for step in &outcome.trace {
                        let detail = serde_json::to_string(step).expect("trace serializes");
                        w(
                            out,
                            format!(
                                "  {:?}: {} {detail}",
                                step.stage(),
                                if step.passed() { "ok" } else { "FAILED" }
                            ),
                        );
                    }
                }
                OutputFormat::Json => w(
                    out,
                    json!({"node_id": node_id, "verdict": outcome.verdict, "trace": outcome.trace})
                        .to_string(),
                ),
            }
            Ok(outcome.verdict.exit_code())
        }

        Command::Chain { action } => match action {
            ChainAction::Inspect { chain } => {
                let chain = storage::load_chain(&chain_path(chain, &file)?)?;
                match output {
                    OutputFormat::Text => {
                        w(
                            out,
                            format!(
                                "{:>5}  {:<24}  {:<16}  {}",
                                "index", "node_id", "owner", "hash"
                            ),
                        );
                        for block in chain.blocks() {
                            let (node, owner) = block
                                .data
                                .as_ref()
                                .map(|d| (d.node_id.as_str(), d.owner_username.as_str()))
                                .unwrap_or(("<genesis>", "-"));
                            w(
                                out,
                                format!(
                                    "{:>5}  {node:<24}  {owner:<16}  {}",
                                    block.meta.index,
                                    block.hash.short(16)
                                ),
                            );
                        }
                    }
                    OutputFormat::Json => {
                        let rows: Vec<_> = chain
                            .blocks()
                            .iter()
                            .map(|b| {
                                json!({
                                    "index": b.meta.index,
                                    "timestamp": b.meta.timestamp,
                                    "node_id": b.data.as_ref().map(|d| &d.node_id),
                                    "owner_username": b.data.as_ref().map(|d| &d.owner_username),
                                    "hash": b.hash,
                                })
                            })
                            .collect();
                        w(out, json!({"blocks": rows}).to_string());
                    }
                }
                Ok(EXIT_OK)
            }
            ChainAction::Validate { chain } => {
                let chain = storage::load_chain(&chain_path(chain, &file)?)?;
                let result = validate_chain(&chain);
                match (&result, output) {
                    (Ok(()), OutputFormat::Text) => {
                        w(out, format!("valid: {} blocks", chain.len()))
                    }
                    (Err(fault), OutputFormat::Text) => w(out, format!("invalid: {fault}")),
                    (Ok(()), OutputFormat::Json) => w(
                        out,
                        json!({"valid": true, "blocks": chain.len()}).to_string(),
                    ),
                    (Err(fault), OutputFormat::Json) => w(
                        out,
                        json!({
                            "valid": false,
                            "block_index": fault.index,
                            "cause": fault.cause,
                            "message": fault.fault.to_string(),
                        })
                        .to_string(),
                    ),
                }
                Ok(if result.is_ok() {
                    EXIT_OK
                } else {
                    EXIT_FAILURE
                })
            }
        },

        Command::MockServe { bind, fixtures } => {
            let provider = Arc::new(MockProvider::from_fixtures(&fixtures).map_err(fail)?);
            let mut server =
                serve_mock(provider, bind.as_str(), ServeOptions::default()).map_err(fail)?;
            match output {
                OutputFormat::Text => w(out, format!("listening on {}", server.base_url())),
                OutputFormat::Json => w(out, json!({"listening": server.base_url()}).to_string()),
            }
            let _ = out.flush();
            let runtime = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .map_err(fail)?;
            runtime.block_on(tokio::signal::ctrl_c()).map_err(fail)?;
            server.shutdown();
            Ok(EXIT_OK)
        }

        Command::Sim {
            scenario,
            nodes,
            seed,
            gossip_rounds,
            report,
        } => {
            let scenario: Scenario = scenario.parse().map_err(|e| {
                let usage = Cli::command()
                    .find_subcommand_mut("sim")
                    .map(|c| c.render_usage().to_string())
                    .unwrap_or_default();
                fail(format!("{e}\n{usage}"))
            })?;
            let config = SimConfig {
                node_count: nodes,
                gossip_rounds_per_tick: gossip_rounds,
                rng_seed: seed,
                scenario,
            };
            let result = simnet::run(&config).map_err(fail)?;
            let path = report.unwrap_or_else(|| PathBuf::from(format!("sim-{scenario}.json")));
            std::fs::write(&path, result.to_json())
                .map_err(|e| fail(format!("{}: {e}", path.display())))?;
            match output {
                OutputFormat::Text => {
                    for check in &result.checks {
                        let mark = if check.passed { "PASS" } else { "FAIL" };
                        w(out, format!("[{mark}] {}: {}", check.name, check.detail));
                    }
                    w(out, format!("report written to {}", path.display()));
                }
                OutputFormat::Json => w(
                    out,
                    json!({"report_path": path, "passed": result.passed, "checks": result.checks})
                        .to_string(),
                ),
            }
            Ok(if result.passed { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
