// Serves fixture profiles over the lookup endpoint and queries them through
// the HTTP client, with and without the TTL cache, and with an injected fault.
//
// ```sh
// cargo run -p chainpki --example mock_identity_server
// ```

use std::error::Error;
use std::sync::Arc;
use std::time::Duration;

use chainpki::crypto::generate_keypair;
use chainpki::identity::{serve_mock, CachedProvider, Fault, KeybaseClient, ServeOptions};
use chainpki::{IdentityProfile, IdentityProvider, MockProvider, Proof, ProofType};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let alice = generate_keypair(Some(&[1u8; 32]))?;
    let registry = Arc::new(MockProvider::with_profiles([IdentityProfile::new(
        "alice",
        alice.public_key.to_base64(),
        vec![
            Proof::valid(ProofType::Github, "alice"),
            Proof::valid(ProofType::Website, "alice.example.org"),
        ],
    )])?);

    let mut server = serve_mock(
        Arc::clone(&registry),
        "127.0.0.1:0",
        ServeOptions::default(),
    )?;
    println!("mock lookup server at {}", server.base_url());

    let client = KeybaseClient::new(&server.base_url(), Duration::from_secs(2))?;
    println!("GET {}?usernames=alice", client.endpoint());
    let profile = client.lookup("alice")?.ok_or("alice missing")?;
    println!("{}", serde_json::to_string_pretty(&profile)?);
    println!("unknown user -> {:?}", client.lookup("zed")?);

    let cached = CachedProvider::new(client, Duration::from_secs(60));
    for _ in 0..5 {
        cached.lookup("alice")?;
    }
    println!(
        "5 cached lookups reached the server {} time(s)",
        registry.lookup_count() - 2
    );

    server.shutdown();
    let err = KeybaseClient::new(&server.base_url(), Duration::from_millis(300))?
        .lookup("alice")
        .unwrap_err();
    println!("server stopped -> transport error: {}", err.is_transport());

    let truncated = serve_mock(
        Arc::clone(&registry),
        "127.0.0.1:0",
        ServeOptions {
            fault: Some(Fault::TruncatedBody),
        },
    )?;
    let err = KeybaseClient::new(&truncated.base_url(), Duration::from_secs(2))?
        .lookup("alice")
        .unwrap_err();
    println!("truncated body -> {err}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
