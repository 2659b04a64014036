//! Scripted scenarios and their machine-readable reports.
//!
//! Report schema (JSON):
//!
//! ```text
//! {
//!   "scenario": "uc1_signature_verification" | "uc2_unreliable_proofs" | "uc3_key_rotation" | "convergence",
//!   "config": {"node_count": n, "gossip_rounds_per_tick": r, "rng_seed": s},
//!   "ticks_run": t,
//!   "ticks_to_converge": t | null,
//!   "summary": { scenario-specific },
//!   "checks": [{"name": ..., "passed": bool, "detail": ...}],
//!   "notes": [string],
//!   "passed": bool,
//!   "nodes": [{"node_id", "role", "chain_length", "tip_hash",
//!              "decision_log": [{"tick", "peer", "verdict", "trace": [...]}]}]
//! }
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use super::{Decision, Network, Role, SimNode};
use crate::crypto::{generate_keypair, hash_bytes, KeyPair};
use crate::identity::{IdentityError, IdentityProfile, MockProvider, Proof, ProofState, ProofType};
use crate::ledger::{validate_chain, Blockchain, LedgerError};
use crate::record::DeviceRecord;
use crate::verifier::{register_device, Stage, TrustPolicy, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[serde(rename = "uc1_signature_verification")]
    Uc1SignatureVerification,
    #[serde(rename = "uc2_unreliable_proofs")]
    Uc2UnreliableProofs,
    #[serde(rename = "uc3_key_rotation")]
    Uc3KeyRotation,
    Convergence,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Uc1SignatureVerification,
        Scenario::Uc2UnreliableProofs,
        Scenario::Uc3KeyRotation,
        Scenario::Convergence,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Uc1SignatureVerification => "uc1_signature_verification",
            Scenario::Uc2UnreliableProofs => "uc2_unreliable_proofs",
            Scenario::Uc3KeyRotation => "uc3_key_rotation",
            Scenario::Convergence => "convergence",
        }
    }

    fn min_nodes(self) -> usize {
        match self {
            Scenario::Uc1SignatureVerification => 4,
            Scenario::Uc2UnreliableProofs | Scenario::Uc3KeyRotation => 3,
            Scenario::Convergence => 2,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.id() == s)
            .ok_or_else(|| SimError::UnknownScenario(s.to_owned()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("unknown scenario {0:?} (expected one of uc1_signature_verification, uc2_unreliable_proofs, uc3_key_rotation, convergence)")]
    UnknownScenario(String),
    #[error("scenario {scenario} needs at least {need} nodes, got {got}")]
    TooFewNodes {
        scenario: Scenario,
        need: usize,
        got: usize,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    pub node_count: usize,
    pub gossip_rounds_per_tick: usize,
    pub rng_seed: u64,
    #[serde(skip)]
    pub scenario: Scenario,
}

impl SimConfig {
    pub fn new(scenario: Scenario) -> Self {
        SimConfig {
            node_count: 10,
            gossip_rounds_per_tick: 1,
            rng_seed: 42,
            scenario,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_owned(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodeReport {
    pub node_id: String,
    pub role: Role,
    pub chain_length: usize,
    pub tip_hash: String,
    pub decision_log: Vec<Decision>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub config: SimConfig,
    pub ticks_run: u64,
    pub ticks_to_converge: Option<u64>,
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub passed: bool,
    pub nodes: Vec<NodeReport>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn node(&self, node_id: &str) -> Option<&NodeReport> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    /// Every decision any node logged about `sender`.
    pub fn decisions_about<'a>(
        &'a self,
        sender: &'a str,
    ) -> impl Iterator<Item = &'a Decision> + 'a {
        self.nodes
            .iter()
            .flat_map(|n| n.decision_log.iter())
            .filter(move |d| d.peer == sender)
    }
}

/// Runs the scenario named by `id` with `config`'s sizes and seed.
pub fn run_scenario(id: &str, config: &SimConfig) -> Result<ScenarioReport, SimError> {
    let scenario = id.parse()?;
    run(&SimConfig {
        scenario,
        ..config.clone()
    })
}

pub fn run(config: &SimConfig) -> Result<ScenarioReport, SimError> {
    let need = config.scenario.min_nodes();
    if config.node_count < need {
        return Err(SimError::TooFewNodes {
            scenario: config.scenario,
            need,
            got: config.node_count,
        });
    }
    let mut script = Script::new(config);
    let outcome = match config.scenario {
        Scenario::Uc1SignatureVerification => script.uc1()?,
        Scenario::Uc2UnreliableProofs => script.uc2()?,
        Scenario::Uc3KeyRotation => script.uc3()?,
        Scenario::Convergence => script.convergence()?,
    };
    let nodes = outcome
        .network
        .nodes()
        .iter()
        .map(|n| NodeReport {
            node_id: n.node_id.clone(),
            role: n.role,
            chain_length: n.local_chain.len(),
            tip_hash: n.local_chain.tip().hash.to_string(),
            decision_log: n.decision_log().to_vec(),
        })
        .collect();
    Ok(ScenarioReport {
        scenario: config.scenario,
        config: config.clone(),
        ticks_run: outcome.network.tick(),
        ticks_to_converge: outcome.ticks_to_converge,
        summary: outcome.summary,
        passed: outcome.checks.iter().all(|c| c.passed),
        checks: outcome.checks,
        notes: outcome.notes,
        nodes,
    })
}

struct Outcome {
    network: Network,
    ticks_to_converge: Option<u64>,
    summary: serde_json::Value,
    checks: Vec<Check>,
    notes: Vec<String>,
}

/// Shared scaffolding: deterministic keys and the registration clock.
struct Script<'a> {
    config: &'a SimConfig,
    provider: Arc<MockProvider>,
    clock: u64,
}

fn node_name(i: usize) -> String {
    format!("node-{i:02}")
}

fn proofs(spec: &[(ProofType, ProofState)]) -> Vec<Proof> {
    spec.iter()
        .map(|(t, s)| Proof::new(t.clone(), format!("{t}-handle"), *s))
        .collect()
}

fn strong_proofs() -> Vec<Proof> {
    use ProofState::Valid;
    proofs(&[
        (ProofType::Github, Valid),
        (ProofType::Twitter, Valid),
        (ProofType::Reddit, Valid),
    ])
}

impl<'a> Script<'a> {
    fn new(config: &'a SimConfig) -> Self {
        Script {
            config,
            provider: Arc::new(MockProvider::new()),
            clock: 0,
        }
    }

    /// Key pair derived from the run seed and a label, independent of the
    /// order in which keys are requested.
    fn key(&self, label: &str) -> KeyPair {
        let mut input = self.config.rng_seed.to_le_bytes().to_vec();
        input.extend_from_slice(label.as_bytes());
        let seed = hex::decode(hash_bytes(&input).as_str()).expect("digest is hex");
        generate_keypair(Some(&seed)).expect("32-byte seed")
    }

    fn owner(&self, username: &str, proofs: Vec<Proof>) -> Result<KeyPair, SimError> {
        let key = self.key(&format!("owner:{username}"));
        self.provider.register(
            IdentityProfile::new(username, key.public_key.to_base64(), proofs),
            crate::identity::RegisterMode::New,
        )?;
        Ok(key)
    }

    fn register(
        &mut self,
        chain: &Blockchain,
        node_id: &str,
        owner_username: &str,
        signer: &KeyPair,
    ) -> Result<Blockchain, SimError> {
        self.clock += 1;
        let device = self.key(&format!("device:{node_id}"));
        let record = DeviceRecord::new(node_id, owner_username, &device.public_key)
            .map_err(|e| LedgerError::Rejected(e.into()))?;
        Ok(register_device(
            chain,
            &signer.private_key,
            record,
            self.clock,
        )?)
    }

    fn network(&self) -> Network {
        Network::new(
            Arc::clone(&self.provider),
            self.config.gossip_rounds_per_tick,
            self.config.rng_seed,
        )
    }

    fn add_nodes(&self, net: &mut Network, chain: &Blockchain) {
        for i in 0..self.config.node_count {
            let id = node_name(i);
            let device = self.key(&format!("device:{id}"));
            net.add_node(SimNode::new(
                id,
                device,
                chain.clone(),
                TrustPolicy::default(),
            ));
        }
    }

    /// Checks that every receiver logged `expected` (and `path`, if given)
    /// for `sender`.
    fn unanimous(
        net: &Network,
        name: &str,
        sender: &str,
        expected: Verdict,
        path: Option<&[(Stage, bool)]>,
    ) -> (Check, Vec<Verdict>) {
        let decisions: Vec<&Decision> = net
            .nodes()
            .iter()
            .flat_map(|n| n.decision_log())
            .filter(|d| d.peer == sender)
            .collect();
        let mut seen: Vec<Verdict> = Vec::new();
        for d in &decisions {
            if !seen.contains(&d.outcome.verdict) {
                seen.push(d.outcome.verdict);
            }
        }
        let receivers = net.nodes().len() - 1;
        let ok = decisions.len() == receivers
            && decisions.iter().all(|d| {
                d.outcome.verdict == expected && path.is_none_or(|p| d.outcome.path() == p)
            });
        let detail = format!(
            "{sender}: {} of {receivers} receivers decided, verdicts {seen:?}, expected {expected}",
            decisions.len()
        );
        (Check::new(name, ok, detail), seen)
    }

    fn uc1(&mut self) -> Result<Outcome, SimError> {
        use ProofState::{Broken, Valid};
        let alice = self.owner("alice", strong_proofs())?;
        let bob = self.owner(
            "bob",
            proofs(&[(ProofType::Github, Valid), (ProofType::Twitter, Broken)]),
        )?;
        self.owner("carol", strong_proofs())?;
        // mallory claims a device in carol's name but can only sign with her own key
        let mallory = self.key("owner:mallory");

        let mut chain = Blockchain::new(0);
        chain = self.register(&chain, &node_name(0), "carol", &mallory)?;
        chain = self.register(&chain, &node_name(1), "bob", &bob)?;
        for i in 2..self.config.node_count {
            chain = self.register(&chain, &node_name(i), "alice", &alice)?;
        }

        let mut net = self.network();
        self.add_nodes(&mut net, &chain);
        for i in 0..3 {
            net.schedule_ping(1, node_name(i));
        }
        net.run(1);

        use Stage::*;
        let expected = [
            (
                "situation_1_bad_signature",
                Verdict::RejectedBadSignature,
                vec![
                    (BlockLookup, true),
                    (OwnerLookup, true),
                    (SignatureCheck, false),
                ],
            ),
            (
                "situation_2_insufficient_proofs",
                Verdict::RejectedInsufficientProofs,
                vec![
                    (BlockLookup, true),
                    (OwnerLookup, true),
                    (SignatureCheck, true),
                    (ProofPolicy, false),
                ],
            ),
            (
                "situation_3_trusted",
                Verdict::Trusted,
                vec![
                    (BlockLookup, true),
                    (OwnerLookup, true),
                    (SignatureCheck, true),
                    (ProofPolicy, true),
                ],
            ),
        ];
        let mut checks = Vec::new();
        let mut observed = Vec::new();
        for (i, (name, verdict, path)) in expected.iter().enumerate() {
            let (check, seen) = Self::unanimous(&net, name, &node_name(i), *verdict, Some(path));
            checks.push(check);
            observed.push(json!({"sender": node_name(i), "verdicts": seen}));
        }
        let summary = json!({
            "expected": expected.iter().map(|e| e.1).collect::<Vec<_>>(),
            "observed": observed,
            "min_valid_proofs": TrustPolicy::default().min_valid_proofs,
        });
        Ok(Outcome {
            network: net,
            ticks_to_converge: None,
            summary,
            checks,
            notes: vec![
                "node-00 is registered under carol's name but signed with another key".into(),
                "node-01's owner has one valid proof; the receiver policy requires two".into(),
            ],
        })
    }

    fn uc2(&mut self) -> Result<Outcome, SimError> {
        use ProofState::{Broken, Pending, Valid};
        let alice = self.owner("alice", strong_proofs())?;
        let dave = self.owner(
            "dave",
            proofs(&[
                (ProofType::Twitter, Pending),
                (ProofType::Reddit, Pending),
                (ProofType::Facebook, Broken),
            ]),
        )?;
        // proofs on freshly made throwaway accounts still verify as valid
        let eve = self.owner(
            "eve",
            proofs(&[(ProofType::Twitter, Valid), (ProofType::Reddit, Valid)]),
        )?;

        let mut chain = Blockchain::new(0);
        chain = self.register(&chain, &node_name(0), "dave", &dave)?;
        chain = self.register(&chain, &node_name(1), "eve", &eve)?;
        for i in 2..self.config.node_count {
            chain = self.register(&chain, &node_name(i), "alice", &alice)?;
        }
        let mut net = self.network();
        self.add_nodes(&mut net, &chain);
        net.schedule_ping(1, node_name(0));
        net.schedule_ping(1, node_name(1));
        net.run(1);

        let (weak, weak_seen) = Self::unanimous(
            &net,
            "unproven_owner_rejected",
            &node_name(0),
            Verdict::RejectedInsufficientProofs,
            None,
        );
        let (fake, fake_seen) = Self::unanimous(
            &net,
            "fabricated_proofs_indistinguishable",
            &node_name(1),
            Verdict::Trusted,
            None,
        );
        Ok(Outcome {
            network: net,
            ticks_to_converge: None,
            summary: json!({
                "follower_data_available": false,
                "unproven_owner": {"sender": node_name(0), "verdicts": weak_seen},
                "fabricated_proofs_owner": {"sender": node_name(1), "verdicts": fake_seen},
            }),
            checks: vec![weak, fake],
            notes: vec![
                "the identity provider exposes no follower counts, so trust rests on proof counts alone".into(),
                "an owner whose proofs point at fabricated accounts passes the same policy as a genuine one".into(),
            ],
        })
    }

    fn uc3(&mut self) -> Result<Outcome, SimError> {
        const ROTATION_TICK: u64 = 3;
        const TICKS: u64 = 6;
        let alice = self.owner("alice", strong_proofs())?;
        let frank = self.owner("frank", strong_proofs())?;
        let rotated = self.key("owner:frank:rotated");

        let mut chain = Blockchain::new(0);
        chain = self.register(&chain, &node_name(0), "frank", &frank)?;
        chain = self.register(&chain, &node_name(1), "frank", &frank)?;
        for i in 2..self.config.node_count {
            chain = self.register(&chain, &node_name(i), "alice", &alice)?;
        }
        let mut net = self.network();
        self.add_nodes(&mut net, &chain);
        for tick in 1..=TICKS {
            net.schedule_ping(tick, node_name(0));
            net.schedule_ping(tick, node_name(1));
        }
        net.schedule_key_rotation(ROTATION_TICK, "frank", rotated.public_key.to_base64());
        net.run(TICKS);

        let frank_devices = [node_name(0), node_name(1)];
        let (before_total, trusted_before, after_total, bad_after) = {
            let decisions: Vec<&Decision> = net
                .nodes()
                .iter()
                .flat_map(|n| n.decision_log())
                .filter(|d| frank_devices.contains(&d.peer))
                .collect();
            let (before, after): (Vec<&Decision>, Vec<&Decision>) =
                decisions.iter().partition(|d| d.tick < ROTATION_TICK);
            let trusted = before
                .iter()
                .filter(|d| d.outcome.verdict == Verdict::Trusted)
                .count();
            let bad = after
                .iter()
                .filter(|d| d.outcome.verdict == Verdict::RejectedBadSignature)
                .count();
            (before.len(), trusted, after.len(), bad)
        };
        let checks = vec![
            Check::new(
                "trusted_before_rotation",
                before_total > 0 && trusted_before == before_total,
                format!("{trusted_before}/{before_total} trusted before tick {ROTATION_TICK}"),
            ),
            Check::new(
                "bad_signature_after_rotation",
                after_total > 0 && bad_after == after_total,
                format!("{bad_after}/{after_total} bad signature from tick {ROTATION_TICK}"),
            ),
        ];
        Ok(Outcome {
            network: net,
            ticks_to_converge: None,
            summary: json!({
                "rotation_tick": ROTATION_TICK,
                "before": {"trusted": trusted_before, "total": before_total},
                "after": {"bad_signature": bad_after, "total": after_total},
            }),
            checks,
            notes: vec![
                "the owner replaced their published key; blocks signed with the old key no longer verify".into(),
            ],
        })
    }

    fn convergence(&mut self) -> Result<Outcome, SimError> {
        let n = self.config.node_count;
        let mut net = self.network();
        let mut longest = None;
        for i in 0..n {
            let username = format!("owner{i:02}");
            let owner = self.owner(&username, strong_proofs())?;
            let mut chain = Blockchain::new(0);
            for k in 0..i {
                chain = self.register(
                    &chain,
                    &format!("{}-dev{k:02}", node_name(i)),
                    &username,
                    &owner,
                )?;
            }
            if i + 1 == n {
                longest = Some(chain.tip().hash.clone());
            }
            let id = node_name(i);
            let device = self.key(&format!("device:{id}"));
            net.add_node(SimNode::new(id, device, chain, TrustPolicy::default()));
        }
        let longest = longest.expect("at least one honest node");

        // a longer chain with one record rewritten after the fact
        let forger = self.key("owner:forger");
        let mut forged = Blockchain::new(0);
        for k in 0..n + 5 {
            forged = self.register(&forged, &format!("forged-dev{k:02}"), "forger", &forger)?;
        }
        let mut blocks = forged.into_blocks();
        blocks[2].data.as_mut().expect("non-genesis").owner_username = "owner00".into();
        let forged = Blockchain::from_blocks(blocks)?;
        let forged_tip = forged.tip().hash.clone();
        let forged_len = forged.len();
        net.add_node(SimNode::adversary(
            "adversary",
            self.key("device:adversary"),
            forged,
        ));

        let max_ticks = 4 * n as u64;
        let mut ticks_to_converge = None;
        let mut monotone = true;
        while ticks_to_converge.is_none() && net.tick() < max_ticks {
            let lengths: Vec<usize> = net.nodes().iter().map(|x| x.local_chain.len()).collect();
            net.step();
            monotone &= net
                .nodes()
                .iter()
                .zip(&lengths)
                .all(|(x, before)| x.local_chain.len() >= *before);
            if net.converged() {
                ticks_to_converge = Some(net.tick());
            }
        }

        let honest: Vec<&SimNode> = net
            .nodes()
            .iter()
            .filter(|x| x.role == Role::Honest)
            .collect();
        let adopted_forgery = honest
            .iter()
            .filter(|x| {
                x.local_chain.tip().hash == forged_tip || validate_chain(&x.local_chain).is_err()
            })
            .count();
        let on_longest = honest
            .iter()
            .filter(|x| x.local_chain.tip().hash == longest)
            .count();
        let checks = vec![
            Check::new(
                "converged_within_bound",
                ticks_to_converge.is_some_and(|t| t <= n as u64),
                format!("converged after {ticks_to_converge:?} ticks, bound {n}"),
            ),
            Check::new(
                "converged_on_longest_valid_chain",
                on_longest == honest.len(),
                format!(
                    "{on_longest}/{} honest nodes hold the longest valid chain",
                    honest.len()
                ),
            ),
            Check::new(
                "invalid_longer_chain_never_adopted",
                adopted_forgery == 0,
                format!(
                    "{adopted_forgery} honest nodes adopted the {forged_len}-block forged chain"
                ),
            ),
            Check::new(
                "chain_length_monotone",
                monotone,
                "no node's chain length decreased between ticks",
            ),
        ];
        Ok(Outcome {
            network: net,
            ticks_to_converge,
            summary: json!({
                "honest_nodes": n,
                "initial_lengths": (1..=n).collect::<Vec<_>>(),
                "longest_valid_tip": longest.to_string(),
                "forged_chain_length": forged_len,
                "forged_adoptions": adopted_forgery,
            }),
            checks,
            notes: vec![
                "the adversary node is in addition to node_count honest nodes and never changes its chain".into(),
            ],
        })
    }
}

/// Per-sender verdict sets, for quick inspection.
pub fn verdicts_by_sender(report: &ScenarioReport) -> BTreeMap<String, Vec<Verdict>> {
    let mut out: BTreeMap<String, Vec<Verdict>> = BTreeMap::new();
    for d in report.nodes.iter().flat_map(|n| n.decision_log.iter()) {
        let seen = out.entry(d.peer.clone()).or_default();
        if !seen.contains(&d.outcome.verdict) {
            seen.push(d.outcome.verdict);
        }
    }
    out
}
