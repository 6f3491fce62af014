//! Synthesis routes and their replay.

use std::fmt;
use std::str::FromStr;

use super::GeneratorError;
use crate::molgraph::MolecularGraph;
use crate::reactions::{apply_reaction, Product, ReactionSpace};

/// One reactant slot of a route step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reactant {
    Block(String),
    /// The product of the previous step.
    Intermediate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteStep {
    pub template: String,
    /// Reactants in role order.
    pub reactants: Vec<Reactant>,
    /// Index into the sorted product list of the reaction.
    pub product: usize,
}

/// Ordered reaction steps; text form `amide[B001,B020]#0;suzuki[@,B031]#1`
/// where `@` is the previous product.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Route {
    pub steps: Vec<RouteStep>,
}

impl Route {
    pub fn block_ids(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().flat_map(|s| {
            s.reactants.iter().filter_map(|r| match r {
                Reactant::Block(id) => Some(id.as_str()),
                Reactant::Intermediate => None,
            })
        })
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{}[", step.template)?;
            for (j, r) in step.reactants.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                match r {
                    Reactant::Block(id) => f.write_str(id)?,
                    Reactant::Intermediate => f.write_str("@")?,
                }
            }
            write!(f, "]#{}", step.product)?;
        }
        Ok(())
    }
}

impl FromStr for Route {
    type Err = GeneratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeneratorError::BadRoute(s.to_string());
        let mut steps = Vec::new();
        for part in s.split(';').filter(|p| !p.is_empty()) {
            let (head, product) = part.rsplit_once("]#").ok_or_else(bad)?;
            let (template, reactants) = head.split_once('[').ok_or_else(bad)?;
            if template.is_empty() {
                return Err(bad());
            }
            let reactants = reactants
                .split(',')
                .map(|r| match r {
                    "@" => Ok(Reactant::Intermediate),
                    "" => Err(bad()),
                    id => Ok(Reactant::Block(id.to_string())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let product = product.parse().map_err(|_| bad())?;
            steps.push(RouteStep { template: template.to_string(), reactants, product });
        }
        Ok(Route { steps })
    }
}

/// Re-runs every step of `route` and returns the final product.
pub fn replay_route(route: &Route, space: &ReactionSpace) -> Result<Product, GeneratorError> {
    let mut current: Option<Product> = None;
    for step in &route.steps {
        let bad = |why: &str| GeneratorError::Replay { route: route.to_string(), reason: why.to_string() };
        let t = space.template_index(&step.template).ok_or_else(|| bad("unknown template"))?;
        let mut reactants: Vec<&MolecularGraph> = Vec::with_capacity(step.reactants.len());
        for r in &step.reactants {
            reactants.push(match r {
                Reactant::Block(id) => &space.library.get(id).ok_or_else(|| bad("unknown block"))?.graph,
                Reactant::Intermediate => &current.as_ref().ok_or_else(|| bad("no intermediate"))?.graph,
            });
        }
        let outcome = apply_reaction(&space.templates[t], &reactants)?;
        let product = outcome.products.into_iter().nth(step.product).ok_or_else(|| bad("product index out of range"))?;
        current = Some(product);
    }
    current.ok_or_else(|| GeneratorError::BadRoute(route.to_string()))
}
