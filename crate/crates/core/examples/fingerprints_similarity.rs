//! Morgan fingerprints, Tanimoto similarity and model feature vectors.

use anyhow::Result;
use fluorogen::fingerprint::{build_feature_vector, default_fingerprint, tanimoto, SolventFeatures};
use fluorogen::molgraph::parse_smiles;

fn main() -> Result<()> {
    let names = ["naphthalene", "2-naphthol", "anthracene", "benzene", "hexane"];
    let smiles = ["c1ccc2ccccc2c1", "Oc1ccc2ccccc2c1", "c1ccc2cc3ccccc3cc2c1", "c1ccccc1", "CCCCCC"];
    let fps = smiles.iter().map(|s| Ok(default_fingerprint(&parse_smiles(s)?))).collect::<Result<Vec<_>>>()?;

    for (n, f) in names.iter().zip(&fps) {
        println!("{n:<12} {:>3} bits set", f.popcount());
    }
    print!("\n{:<12}", "");
    for n in &names {
        print!("{n:>12}");
    }
    println!();
    for (i, a) in fps.iter().enumerate() {
        print!("{:<12}", names[i]);
        for b in &fps {
            print!("{:>12.3}", tanimoto(a, b)?);
        }
        println!();
    }

    let fv = build_feature_vector(&parse_smiles(smiles[1])?, &SolventFeatures::WATER);
    let tail: Vec<f64> = (fv.len() - 4..fv.len()).map(|i| fv.get(i)).collect();
    println!("\nfeature vector: {} entries, {} non-zero, solvent tail {tail:?}", fv.len(), fv.nonzero().len());
    Ok(())
}
