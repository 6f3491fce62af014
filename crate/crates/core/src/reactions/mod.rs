//! Reaction templates, substructure matching and the building-block
//! library.

pub mod pattern;
mod template;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::Deserialize;
use thiserror::Error;

pub use pattern::{
    match_pattern, parse_pattern, BondQuery, PatternError, PatternErrorKind, PatternQuery, PrimKind, Primitive,
    QueryAtom, QueryBond,
};
pub use template::{apply_reaction, ApplyOutcome, Edit, Product, ReactionTemplate, TemplateSpec, MAX_COMBINATIONS};

use crate::fingerprint::{default_fingerprint, Fingerprint};
use crate::molgraph::{parse_smiles, sp2_network_size, write_canonical_smiles, MolecularGraph};

#[derive(Debug, Error)]
pub enum ReactionError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("reaction file is not valid TOML: {0}")]
    Toml(String),
    #[error("template {template} takes {expected} reactants, got {got}")]
    ArityMismatch { template: String, expected: usize, got: usize },
    #[error("template {template}: no match for role {role}")]
    NoMatch { template: String, role: usize },
    #[error("template {template} has no role {role}")]
    UnknownRole { template: usize, role: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("no valid entries in {0}")]
    NoValidEntries(PathBuf),
}

#[derive(Debug, Clone)]
pub struct BuildingBlock {
    pub id: String,
    pub smiles: String,
    pub graph: MolecularGraph,
    pub fingerprint: Fingerprint,
    pub sp2: usize,
}

impl BuildingBlock {
    pub fn new(id: &str, smiles: &str) -> Result<Self, String> {
        let parsed = parse_smiles(smiles).map_err(|e| e.to_string())?;
        let canonical = write_canonical_smiles(&parsed);
        let graph = parse_smiles(&canonical).expect("canonical SMILES re-parses");
        Ok(BuildingBlock {
            id: id.to_string(),
            fingerprint: default_fingerprint(&graph),
            sp2: sp2_network_size(&graph),
            smiles: canonical,
            graph,
        })
    }
}

/// Problem with one entry of an input file; the entry was skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryIssue {
    pub line: usize,
    pub entry: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Library {
    blocks: Vec<BuildingBlock>,
    by_id: HashMap<String, usize>,
}

impl Library {
    pub fn new(blocks: Vec<BuildingBlock>) -> Result<Self, ReactionError> {
        let mut by_id = HashMap::with_capacity(blocks.len());
        for (i, b) in blocks.iter().enumerate() {
            if by_id.insert(b.id.clone(), i).is_some() {
                return Err(ReactionError::DuplicateId(b.id.clone()));
            }
        }
        Ok(Library { blocks, by_id })
    }

    pub fn blocks(&self) -> &[BuildingBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&BuildingBlock> {
        self.by_id.get(id).map(|&i| &self.blocks[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }
}

fn read(path: &Path) -> Result<String, ReactionError> {
    std::fs::read_to_string(path).map_err(|source| ReactionError::Io { path: path.to_path_buf(), source })
}

/// Parses `id<TAB>smiles` lines. Blank lines, `#` comments and an
/// `id<TAB>smiles` header are ignored.
pub fn parse_building_blocks(text: &str) -> Result<(Library, Vec<EntryIssue>), ReactionError> {
    let mut blocks = Vec::new();
    let mut issues = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.eq_ignore_ascii_case("id\tsmiles")) {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(id), Some(smiles)) = (fields.next(), fields.next()) else {
            issues.push(EntryIssue { line: i + 1, entry: line.into(), reason: "expected id<TAB>smiles".into() });
            continue;
        };
        match BuildingBlock::new(id.trim(), smiles.trim()) {
            Ok(b) => blocks.push(b),
            Err(reason) => issues.push(EntryIssue { line: i + 1, entry: id.trim().into(), reason }),
        }
    }
    Ok((Library::new(blocks)?, issues))
}

pub fn ingest_building_blocks(path: &Path) -> Result<(Library, Vec<EntryIssue>), ReactionError> {
    let (lib, issues) = parse_building_blocks(&read(path)?)?;
    if lib.is_empty() {
        return Err(ReactionError::NoValidEntries(path.to_path_buf()));
    }
    Ok((lib, issues))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionFile {
    #[serde(default)]
    reaction: Vec<toml::Value>,
}

/// Parses a TOML document of `[[reaction]]` tables (`id`, `arity`,
/// `roles`, `edits`, optional `name`).
pub fn parse_reactions(text: &str) -> Result<(Vec<ReactionTemplate>, Vec<EntryIssue>), ReactionError> {
    let file: ReactionFile = toml::from_str(text).map_err(|e| ReactionError::Toml(e.to_string()))?;
    let mut templates: Vec<ReactionTemplate> = Vec::new();
    let mut issues = Vec::new();
    for (i, value) in file.reaction.into_iter().enumerate() {
        let label = value.get("id").and_then(|v| v.as_str()).unwrap_or("?").to_string();
        let spec: TemplateSpec = match value.try_into() {
            Ok(s) => s,
            Err(e) => {
                issues.push(EntryIssue { line: i + 1, entry: label, reason: e.to_string() });
                continue;
            }
        };
        if templates.iter().any(|t| t.id == spec.id) {
            return Err(ReactionError::DuplicateId(spec.id));
        }
        match ReactionTemplate::from_spec(&spec) {
            Ok(t) => templates.push(t),
            Err(reason) => issues.push(EntryIssue { line: i + 1, entry: spec.id, reason }),
        }
    }
    Ok((templates, issues))
}

pub fn ingest_reactions(path: &Path) -> Result<(Vec<ReactionTemplate>, Vec<EntryIssue>), ReactionError> {
    let (templates, issues) = parse_reactions(&read(path)?)?;
    if templates.is_empty() {
        return Err(ReactionError::NoValidEntries(path.to_path_buf()));
    }
    Ok((templates, issues))
}

/// Templates plus a library, with lazily filled per-(template, role)
/// lists of compatible blocks.
#[derive(Debug)]
pub struct ReactionSpace {
    pub templates: Vec<ReactionTemplate>,
    pub library: Library,
    compatible: Vec<Vec<OnceLock<Vec<usize>>>>,
}

impl ReactionSpace {
    pub fn new(templates: Vec<ReactionTemplate>, library: Library) -> Self {
        let compatible = templates.iter().map(|t| (0..t.arity()).map(|_| OnceLock::new()).collect()).collect();
        ReactionSpace { templates, library, compatible }
    }

    /// Indices of library blocks matching `role` of template `template`,
    /// in library order.
    pub fn compatible_blocks(&self, template: usize, role: usize) -> Result<&[usize], ReactionError> {
        let cell = self
            .compatible
            .get(template)
            .and_then(|roles| roles.get(role))
            .ok_or(ReactionError::UnknownRole { template, role })?;
        Ok(cell.get_or_init(|| {
            let t = &self.templates[template];
            (0..self.library.len()).filter(|&b| t.role_matches(role, &self.library.blocks()[b].graph)).collect()
        }))
    }

    pub fn template_index(&self, id: &str) -> Option<usize> {
        self.templates.iter().position(|t| t.id == id)
    }

    /// Templates whose every role has at least one compatible block.
    pub fn usable_templates(&self) -> Vec<usize> {
        (0..self.templates.len())
            .filter(|&t| (0..self.templates[t].arity()).all(|r| !self.compatible_blocks(t, r).expect("valid").is_empty()))
            .collect()
    }
}

/// Block ids of `library` compatible with `role` of `template`.
pub fn compatible_blocks<'a>(template: &ReactionTemplate, role: usize, library: &'a Library) -> Result<Vec<&'a str>, ReactionError> {
    if role >= template.arity() {
        return Err(ReactionError::UnknownRole { template: 0, role });
    }
    Ok(library
        .blocks()
        .iter()
        .filter(|b| template.role_matches(role, &b.graph))
        .map(|b| b.id.as_str())
        .collect())
}
