//! Writes a network as a binary bundle and as JSON, reads both back and
//! checks that predictions are unchanged.

use nalgebra::DVector;
use podflow::net::{init_network, layer_dims, read_bundle, write_bundle, Network, NetworkJson, OutputActivation};

fn main() -> podflow::Result<()> {
    let net = init_network(&layer_dims(74, 5, 100, 5), 42, 0.01, OutputActivation::Linear)?;
    let dir = std::path::Path::new("out/network_bundle");
    std::fs::create_dir_all(dir)?;

    let bin = dir.join("net.bundle");
    write_bundle(&net, &bin)?;
    let json = dir.join("net.json");
    std::fs::write(&json, serde_json::to_string(&net.to_json())?)?;

    let from_bin = read_bundle(&bin)?;
    let parsed: NetworkJson = serde_json::from_str(&std::fs::read_to_string(&json)?)?;
    let from_json = Network::from_json(&parsed)?;

    let x = DVector::from_fn(74, |i, _| (i as f64 * 0.1).sin());
    let y = net.predict(&x)?;
    println!("dims {:?}, {} parameters", net.dims(), net.n_params());
    println!("bundle {} bytes, json {} bytes", std::fs::metadata(&bin)?.len(), std::fs::metadata(&json)?.len());
    println!("binary round trip identical: {}", from_bin == net && from_bin.predict(&x)? == y);
    println!("json round trip identical:   {}", from_json == net && from_json.predict(&x)? == y);
    Ok(())
}
