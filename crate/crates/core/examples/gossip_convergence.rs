// Wires up a small simulated network by hand: nodes start on divergent
// chains, one peer offers a longer forged chain, and gossip settles everyone
// on the longest valid one.
//
// ```sh
// cargo run -p chainpki --example gossip_convergence
// ```

use std::error::Error;
use std::sync::Arc;

use chainpki::crypto::generate_keypair;
use chainpki::simnet::{Network, SimNode, Topology};
use chainpki::{register_device, Blockchain, DeviceRecord, MockProvider, TrustPolicy};

fn chain_of(len: usize, owner_seed: u8) -> Result<Blockchain, Box<dyn Error>> {
    let owner = generate_keypair(Some(&[owner_seed; 32]))?;
    let mut chain = Blockchain::new(0);
    for i in 1..len {
        let device = generate_keypair(Some(&[i as u8; 32]))?;
        let record =
            DeviceRecord::new(&format!("o{owner_seed}-d{i}"), "owner", &device.public_key)?;
        chain = register_device(&chain, &owner.private_key, record, i as u64)?;
    }
    Ok(chain)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut net = Network::new(Arc::new(MockProvider::new()), 1, 7).with_topology(Topology::Ring);
    for i in 0..6u8 {
        let key = generate_keypair(Some(&[100 + i; 32]))?;
        let chain = chain_of(usize::from(i) + 1, i + 1)?;
        net.add_node(SimNode::new(
            format!("n{i}"),
            key,
            chain,
            TrustPolicy::default(),
        ));
    }

    let mut blocks = chain_of(12, 99)?.into_blocks();
    blocks[3].meta.timestamp += 1;
    let forged = Blockchain::from_blocks(blocks)?;
    let forged_tip = forged.tip().hash.clone();
    net.add_node(SimNode::adversary(
        "forger",
        generate_keypair(None)?,
        forged,
    ));

    let show = |net: &Network| {
        let row: Vec<String> = net
            .nodes()
            .iter()
            .map(|n| format!("{}:{}", n.node_id, n.local_chain.len()))
            .collect();
        println!("tick {:>2}  {}", net.tick(), row.join(" "));
    };
    show(&net);
    while !net.converged() && net.tick() < 20 {
        net.step();
        show(&net);
    }
    let adopted = net
        .nodes()
        .iter()
        .filter(|n| n.node_id != "forger" && n.local_chain.tip().hash == forged_tip)
        .count();
    println!(
        "converged: {}, nodes holding the forged chain: {adopted}",
        net.converged()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
