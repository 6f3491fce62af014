//! Parses SMILES, prints canonical forms, hybridization counts and the
//! size of the largest sp² network.
//!
//! `cargo run --example parse_and_sp2 -- "c1ccc2ccccc2c1" "CC(=O)O"`

use anyhow::Result;
use fluorogen::molgraph::{parse_smiles, sp2_network_size, write_canonical_smiles, Hybridization};

fn main() -> Result<()> {
    let mut inputs: Vec<String> = std::env::args().skip(1).collect();
    if inputs.is_empty() {
        inputs = ["C", "c1ccccc1", "c1ccc2ccccc2c1", "C=C=C", "N#Cc1ccccc1", "c1ccc(C=Cc2ccccc2)cc1", "[NH4+].[Cl-]"]
            .map(String::from)
            .to_vec();
    }
    println!("{:<28} {:<28} {:>5} {:>4} {:>4} {:>4}", "input", "canonical", "atoms", "sp", "sp2", "net");
    for s in &inputs {
        let g = parse_smiles(s)?;
        let count = |h| g.atoms().iter().filter(|a| a.hybridization == h).count();
        println!(
            "{s:<28} {:<28} {:>5} {:>4} {:>4} {:>4}",
            write_canonical_smiles(&g),
            g.atom_count(),
            count(Hybridization::Sp),
            count(Hybridization::Sp2),
            sp2_network_size(&g)
        );
    }
    match parse_smiles("c1ccccc1X") {
        Ok(_) => unreachable!(),
        Err(e) => println!("\nerrors carry an offset: {e}"),
    }
    Ok(())
}
