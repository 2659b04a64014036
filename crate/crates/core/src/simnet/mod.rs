//! In-process device network driven by a discrete tick loop.
//!
//! Each [`Network::step`] first applies the events scheduled for the new tick
//! (key rotations at the identity provider, then pings), then lets every node
//! run `gossip_rounds_per_tick` chain exchanges with peers drawn from a seeded
//! RNG. Nodes are processed in insertion order and all randomness comes from
//! the network's ChaCha stream, so a run is a pure function of its inputs.

mod scenario;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::crypto::KeyPair;
use crate::identity::MockProvider;
use crate::ledger::{choose_chain, Blockchain};
use crate::verifier::{verify_device, TrustPolicy, VerificationOutcome};

pub use scenario::{
    run, run_scenario, verdicts_by_sender, Check, NodeReport, Scenario, ScenarioReport, SimConfig,
    SimError,
};

/// The broadcast a device sends to announce itself: only its node id,
/// unencrypted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PingMessage {
    pub sender_node_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub tick: u64,
    pub peer: String,
    #[serde(flatten)]
    pub outcome: VerificationOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Honest,
    /// Holds a scripted chain and never adopts anyone else's.
    Adversary,
}

#[derive(Clone, Debug)]
pub struct SimNode {
    pub node_id: String,
    pub keypair: KeyPair,
    pub local_chain: Blockchain,
    pub policy: TrustPolicy,
    pub role: Role,
    decision_log: Vec<Decision>,
}

impl SimNode {
    pub fn new(
        node_id: impl Into<String>,
        keypair: KeyPair,
        local_chain: Blockchain,
        policy: TrustPolicy,
    ) -> Self {
        SimNode {
            node_id: node_id.into(),
            keypair,
            local_chain,
            policy,
            role: Role::Honest,
            decision_log: Vec::new(),
        }
    }

    pub fn adversary(
        node_id: impl Into<String>,
        keypair: KeyPair,
        local_chain: Blockchain,
    ) -> Self {
        SimNode {
            role: Role::Adversary,
            ..Self::new(node_id, keypair, local_chain, TrustPolicy::default())
        }
    }

    pub fn decision_log(&self) -> &[Decision] {
        &self.decision_log
    }

    fn offer(&mut self, remote: &Blockchain) -> bool {
        if self.role == Role::Adversary {
            return false;
        }
        if std::ptr::eq(choose_chain(&self.local_chain, remote), remote) {
            self.local_chain = remote.clone();
            true
        } else {
            false
        }
    }
}

/// Both sides apply the longest-valid-chain rule to the other's chain.
/// Returns whether `a` and `b` respectively adopted the other's chain.
pub fn gossip_exchange(a: &mut SimNode, b: &mut SimNode) -> (bool, bool) {
    let a_adopted = a.offer(&b.local_chain);
    let b_adopted = b.offer(&a.local_chain);
    (a_adopted, b_adopted)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Any node may gossip with any other.
    #[default]
    FullMesh,
    /// Node `i` gossips only with `i - 1` and `i + 1` (mod n).
    Ring,
}

#[derive(Clone, Debug)]
enum Event {
    Ping(PingMessage),
    RotateKey {
        username: String,
        public_key: String,
    },
}

pub struct Network {
    nodes: Vec<SimNode>,
    provider: Arc<MockProvider>,
    gossip_rounds_per_tick: usize,
    topology: Topology,
    rng: ChaCha8Rng,
    tick: u64,
    schedule: BTreeMap<u64, Vec<Event>>,
}

impl Network {
    pub fn new(provider: Arc<MockProvider>, gossip_rounds_per_tick: usize, rng_seed: u64) -> Self {
        Network {
            nodes: Vec::new(),
            provider,
            gossip_rounds_per_tick,
            topology: Topology::FullMesh,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            tick: 0,
            schedule: BTreeMap::new(),
        }
    }

    pub fn with_topology(mut self, topology: Topology) -> Self {
        self.topology = topology;
        self
    }

    pub fn add_node(&mut self, node: SimNode) {
        self.nodes.push(node);
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub fn node(&self, node_id: &str) -> Option<&SimNode> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    pub fn provider(&self) -> &Arc<MockProvider> {
        &self.provider
    }

    /// Number of completed ticks.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn schedule_ping(&mut self, tick: u64, sender: impl Into<String>) {
        self.schedule
            .entry(tick)
            .or_default()
            .push(Event::Ping(PingMessage {
                sender_node_id: sender.into(),
            }));
    }

    /// At the start of `tick`, the provider starts serving `public_key` for
    /// `username`.
    pub fn schedule_key_rotation(
        &mut self,
        tick: u64,
        username: impl Into<String>,
        public_key: impl Into<String>,
    ) {
        self.schedule
            .entry(tick)
            .or_default()
            .push(Event::RotateKey {
                username: username.into(),
                public_key: public_key.into(),
            });
    }

    pub fn step(&mut self) {
        self.tick += 1;
        let mut events = self.schedule.remove(&self.tick).unwrap_or_default();
        // rotations take effect before any ping of the same tick is verified
        events.sort_by_key(|e| matches!(e, Event::Ping(_)));
        for event in events {
            match event {
                Event::RotateKey {
                    username,
                    public_key,
                } => {
                    // scripted rotations always target registered users
                    let _ = self.provider.replace_key(&username, public_key);
                }
                Event::Ping(ping) => self.deliver(&ping),
            }
        }
        self.gossip_round();
    }

    pub fn run(&mut self, ticks: u64) {
        for _ in 0..ticks {
            self.step();
        }
    }

    /// True when every honest node holds a chain with the same tip hash.
    pub fn converged(&self) -> bool {
        let mut tips = self
            .nodes
            .iter()
            .filter(|n| n.role == Role::Honest)
            .map(|n| &n.local_chain.tip().hash);
        match tips.next() {
            Some(first) => tips.all(|t| t == first),
            None => true,
        }
    }

    fn deliver(&mut self, ping: &PingMessage) {
        let tick = self.tick;
        let provider = Arc::clone(&self.provider);
        for node in self
            .nodes
            .iter_mut()
            .filter(|n| n.node_id != ping.sender_node_id)
        {
            let outcome = verify_device(
                &node.local_chain,
                &*provider,
                &node.policy,
                &ping.sender_node_id,
            )
            .expect("the in-memory provider cannot fail");
            node.decision_log.push(Decision {
                tick,
                peer: ping.sender_node_id.clone(),
                outcome,
            });
        }
    }

    fn gossip_round(&mut self) {
        let n = self.nodes.len();
        if n < 2 {
            return;
        }
        for i in 0..n {
            for _ in 0..self.gossip_rounds_per_tick {
                let j = self.pick_peer(i);
                let (a, b) = pair_mut(&mut self.nodes, i, j);
                gossip_exchange(a, b);
            }
        }
    }

    fn pick_peer(&mut self, i: usize) -> usize {
        let n = self.nodes.len();
        match self.topology {
            Topology::FullMesh => {
                let k = self.rng.random_range(0..n - 1);
                if k >= i {
                    k + 1
                } else {
                    k
                }
            }
            Topology::Ring => {
                if self.rng.random_bool(0.5) {
                    (i + 1) % n
                } else {
                    (i + n - 1) % n
                }
            }
        }
    }
}

fn pair_mut<T>(items: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    assert_ne!(i, j);
    if i < j {
        let (left, right) = items.split_at_mut(j);
        (&mut left[i], &mut right[0])
    } else {
        let (left, right) = items.split_at_mut(i);
        (&mut right[0], &mut left[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_keypair;
    use crate::identity::{IdentityProfile, Proof, ProofType};
    use crate::record::DeviceRecord;
    use crate::verifier::{register_device, Verdict};

    fn key(seed: u8) -> KeyPair {
        generate_keypair(Some(&[seed; 32])).unwrap()
    }

    fn chain_with(devices: &[&str], owner: &KeyPair) -> Blockchain {
        let mut chain = Blockchain::new(0);
        for (i, d) in devices.iter().enumerate() {
            let record = DeviceRecord::new(d, "alice", &key(50).public_key).unwrap();
            chain = register_device(&chain, &owner.private_key, record, i as u64 + 1).unwrap();
        }
        chain
    }

    fn trusted_alice(owner: &KeyPair) -> Arc<MockProvider> {
        let proofs = vec![
            Proof::valid(ProofType::Github, "a"),
            Proof::valid(ProofType::Twitter, "a"),
        ];
        Arc::new(
            MockProvider::with_profiles([IdentityProfile::new(
                "alice",
                owner.public_key.to_base64(),
                proofs,
            )])
            .unwrap(),
        )
    }

    #[test]
    fn single_ping_trusted() {
        let owner = key(0);
        let chain = chain_with(&["sender"], &owner);
        let mut net = Network::new(trusted_alice(&owner), 1, 7);
        net.add_node(SimNode::new(
            "sender",
            key(1),
            chain.clone(),
            TrustPolicy::default(),
        ));
        net.add_node(SimNode::new(
            "receiver",
            key(2),
            chain,
            TrustPolicy::default(),
        ));
        net.schedule_ping(1, "sender");
        net.step();
        let log = net.node("receiver").unwrap().decision_log();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].tick, 1);
        assert_eq!(log[0].outcome.verdict, Verdict::Trusted);
        assert!(net.node("sender").unwrap().decision_log().is_empty());
    }

    #[test]
    fn unregistered_sender_rejected_everywhere() {
        let owner = key(0);
        let chain = chain_with(&["a"], &owner);
        let mut net = Network::new(trusted_alice(&owner), 1, 7);
        for id in ["a", "b", "c", "ghost"] {
            net.add_node(SimNode::new(
                id,
                key(3),
                chain.clone(),
                TrustPolicy::default(),
            ));
        }
        net.schedule_ping(1, "ghost");
        net.step();
        for id in ["a", "b", "c"] {
            let log = net.node(id).unwrap().decision_log();
            assert_eq!(log[0].outcome.verdict, Verdict::RejectedNoBlock);
        }
    }

    #[test]
    fn exchange_adopts_longer() {
        let owner = key(0);
        let mut a = SimNode::new(
            "a",
            key(1),
            chain_with(&["x", "y"], &owner),
            TrustPolicy::default(),
        );
        let mut b = SimNode::new(
            "b",
            key(2),
            chain_with(&["p", "q", "r", "s"], &owner),
            TrustPolicy::default(),
        );
        assert_eq!(gossip_exchange(&mut a, &mut b), (true, false));
        assert_eq!(a.local_chain, b.local_chain);
        assert_eq!(a.local_chain.len(), 5);
    }

    #[test]
    fn exchange_rejects_tampered() {
        let owner = key(0);
        let mut a = SimNode::new(
            "a",
            key(1),
            chain_with(&["x", "y"], &owner),
            TrustPolicy::default(),
        );
        let mut blocks = chain_with(&["p", "q", "r", "s"], &owner).into_blocks();
        blocks[2].data.as_mut().unwrap().owner_username = "mallory".into();
        let tampered = Blockchain::from_blocks(blocks).unwrap();
        let mut b = SimNode::new("b", key(2), tampered, TrustPolicy::default());
        let before = a.local_chain.clone();
        let (a_adopted, b_adopted) = gossip_exchange(&mut a, &mut b);
        assert!(!a_adopted);
        assert_eq!(a.local_chain, before);
        // a's chain is shorter, so b keeps its own even though it is invalid
        assert!(!b_adopted);
    }

    #[test]
    fn ring_converges() {
        let owner = key(0);
        let provider = trusted_alice(&owner);
        let mut net = Network::new(provider, 1, 42).with_topology(Topology::Ring);
        let mut expected_tip = None;
        for i in 0..10usize {
            let devices: Vec<String> = (0..i).map(|k| format!("n{i}-d{k}")).collect();
            let refs: Vec<&str> = devices.iter().map(String::as_str).collect();
            let chain = chain_with(&refs, &owner);
            if i == 9 {
                expected_tip = Some(chain.tip().hash.clone());
            }
            net.add_node(SimNode::new(
                format!("node-{i}"),
                key(i as u8 + 1),
                chain,
                TrustPolicy::default(),
            ));
        }
        let mut ticks = 0;
        while !net.converged() && ticks < 100 {
            let lengths: Vec<usize> = net.nodes().iter().map(|n| n.local_chain.len()).collect();
            net.step();
            ticks += 1;
            for (node, before) in net.nodes().iter().zip(lengths) {
                assert!(node.local_chain.len() >= before);
            }
        }
        assert!(net.converged(), "ring did not converge in 100 ticks");
        for node in net.nodes() {
            assert_eq!(Some(&node.local_chain.tip().hash), expected_tip.as_ref());
        }
    }

    #[test]
    fn pair_mut_both_orders() {
        let mut v = vec![1, 2, 3];
        let (a, b) = pair_mut(&mut v, 2, 0);
        std::mem::swap(a, b);
        assert_eq!(v, vec![3, 2, 1]);
    }
}
