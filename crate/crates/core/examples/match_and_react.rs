//! Pattern matching and reaction templates on the toy library.

use std::path::Path;

use anyhow::Result;
use fluorogen::molgraph::parse_smiles;
use fluorogen::reactions::{apply_reaction, ingest_building_blocks, ingest_reactions, match_pattern, parse_pattern, ReactionSpace};

fn main() -> Result<()> {
    let q = parse_pattern("[c:1][Br,I:2]")?;
    let g = parse_smiles("Brc1ccc(I)cc1")?;
    println!("[c:1][Br,I:2] on Brc1ccc(I)cc1 -> {:?}", match_pattern(&q, &g));

    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let (library, _) = ingest_building_blocks(&data.join("toy_blocks.tsv"))?;
    let (templates, _) = ingest_reactions(&data.join("toy_reactions.toml"))?;
    let space = ReactionSpace::new(templates, library);
    println!("\n{} blocks, {} templates", space.library.len(), space.templates.len());
    for (t, template) in space.templates.iter().enumerate() {
        let sizes: Vec<usize> = (0..template.arity()).map(|r| space.compatible_blocks(t, r).map_or(0, <[usize]>::len)).collect();
        println!("  {:<20} compatible blocks per role {sizes:?}", template.id);
    }

    let suzuki = space.template_index("suzuki").expect("toy set has suzuki");
    let a = space.library.get("B001").expect("B001");
    let boronic = space.compatible_blocks(suzuki, 1)?[0];
    let b = &space.library.blocks()[boronic];
    let out = apply_reaction(&space.templates[suzuki], &[&a.graph, &b.graph])?;
    println!("\nsuzuki({}, {}):", a.smiles, b.smiles);
    for p in &out.products {
        println!("  {}", p.smiles);
    }
    Ok(())
}
