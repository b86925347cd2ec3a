//! Seed selection and breadth-first triple extraction.

use std::collections::{BTreeSet, VecDeque};

use super::model::EntityRef;
use super::{Embedder, ExtractionBudget, SystemModel, Triple};
use crate::error::{Error, Result};
use crate::sysgraph::cosine_similarity;

/// A component ranked against the requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedCandidate {
    pub id: String,
    pub name: String,
    pub similarity: f64,
}

/// Ranks components by cosine similarity to the requirement and returns the
/// top-1 of the top-k. The re-ranking hook accepts the top-k candidates and
/// picks an index into them; the default keeps similarity order.
pub fn select_seed(
    model: &SystemModel,
    requirement: &str,
    embedder: &dyn Embedder,
    top_k: usize,
) -> Result<String> {
    select_seed_with(model, requirement, embedder, top_k, |_, _| 0)
}

pub fn select_seed_with(
    model: &SystemModel,
    requirement: &str,
    embedder: &dyn Embedder,
    top_k: usize,
    rerank: impl Fn(&str, &[SeedCandidate]) -> usize,
) -> Result<String> {
    if model.components.is_empty() {
        return Err(Error::SchemaViolation {
            location: "components".into(),
            reason: "model has no components".into(),
        });
    }
    let req_vec = embedder.embed(requirement);
    if req_vec.iter().all(|&x| x == 0.0) {
        return Err(Error::AllZeroEmbedding {
            context: requirement.to_string(),
        });
    }

    let mut candidates: Vec<SeedCandidate> = model
        .components
        .iter()
        .map(|c| SeedCandidate {
            id: c.id.clone(),
            name: c.name.clone(),
            similarity: cosine_similarity(&req_vec, &embedder.embed(&c.name)),
        })
        .collect();
    if candidates.iter().all(|c| c.similarity == 0.0) {
        return Err(Error::AllZeroEmbedding {
            context: "every component name".into(),
        });
    }
    candidates.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .unwrap()
            .then_with(|| a.name.cmp(&b.name))
            .then_with(|| a.id.cmp(&b.id))
    });
    candidates.truncate(top_k.max(1));
    let pick = rerank(requirement, &candidates).min(candidates.len() - 1);
    Ok(candidates[pick].id.clone())
}

/// Edge identity for deduplication: each model edge serializes once, in the
/// direction it is first traversed (exchanges keep their source->target
/// orientation either way).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EdgeId {
    Containment(usize, usize),
    Performs(usize, usize),
    Exchange(usize),
}

/// Breadth-first extraction from the seed component. Neighbors are visited
/// in relation-type priority (containment, then performance, then
/// exchanges) with lexicographic-name tie-breaks, so the output order is
/// deterministic. Stops as soon as `max_triples` is reached.
pub fn extract_triples(
    model: &SystemModel,
    seed_id: &str,
    budget: &ExtractionBudget,
) -> Result<Vec<Triple>> {
    budget.validate()?;
    let seed = model
        .entity_by_id(seed_id)
        .ok_or_else(|| Error::UnknownSeed {
            id: seed_id.to_string(),
        })?;
    if !matches!(seed, EntityRef::Component(_)) {
        return Err(Error::UnknownSeed {
            id: seed_id.to_string(),
        });
    }

    let mut triples = Vec::new();
    let mut visited: BTreeSet<EntityRef> = BTreeSet::new();
    let mut emitted: BTreeSet<EdgeId> = BTreeSet::new();
    let mut queue: VecDeque<EntityRef> = VecDeque::new();
    visited.insert(seed);
    queue.push_back(seed);

    while let Some(node) = queue.pop_front() {
        for (edge, triple, neighbor) in neighbors(model, node) {
            if emitted.insert(edge) {
                triples.push(triple);
            }
            if visited.insert(neighbor) {
                queue.push_back(neighbor);
            }
            if triples.len() >= budget.max_triples {
                return Ok(triples);
            }
        }
    }
    Ok(triples)
}

fn neighbors(model: &SystemModel, node: EntityRef) -> Vec<(EdgeId, Triple, EntityRef)> {
    let mut out = Vec::new();
    let name = model.entity_name(node).to_string();

    match node {
        EntityRef::Component(ci) => {
            let component = &model.components[ci];

            // containment: children first (by name), then the parent
            let mut children: Vec<usize> = model
                .components
                .iter()
                .enumerate()
                .filter(|(_, c)| c.parent.as_deref() == Some(component.id.as_str()))
                .map(|(i, _)| i)
                .collect();
            children.sort_by(|&a, &b| {
                model.components[a]
                    .name
                    .cmp(&model.components[b].name)
                    .then(model.components[a].id.cmp(&model.components[b].id))
            });
            for child in children {
                out.push((
                    EdgeId::Containment(ci, child),
                    Triple::new(&name, "directly_contains", &model.components[child].name),
                    EntityRef::Component(child),
                ));
            }
            if let Some(parent_id) = &component.parent {
                if let Some(EntityRef::Component(pi)) = model.entity_by_id(parent_id) {
                    out.push((
                        EdgeId::Containment(pi, ci),
                        Triple::new(&name, "is_contained_by", &model.components[pi].name),
                        EntityRef::Component(pi),
                    ));
                }
            }

            // performance: functions this component performs
            let mut performed: Vec<usize> = model
                .functions
                .iter()
                .enumerate()
                .filter(|(_, f)| f.component == component.id)
                .map(|(i, _)| i)
                .collect();
            performed.sort_by(|&a, &b| {
                model.functions[a]
                    .name
                    .cmp(&model.functions[b].name)
                    .then(model.functions[a].id.cmp(&model.functions[b].id))
            });
            for fi in performed {
                out.push((
                    EdgeId::Performs(ci, fi),
                    Triple::new(&name, "directly_performs", &model.functions[fi].name),
                    EntityRef::Function(fi),
                ));
            }

            out.extend(exchange_edges(model, &component.id));
        }
        EntityRef::Function(fi) => {
            let function = &model.functions[fi];

            // performance: the performing component
            if let Some(EntityRef::Component(ci)) = model.entity_by_id(&function.component) {
                out.push((
                    EdgeId::Performs(ci, fi),
                    Triple::new(&name, "is_performed_by", &model.components[ci].name),
                    EntityRef::Component(ci),
                ));
            }

            out.extend(exchange_edges(model, &function.id));
        }
    }
    out
}

/// Exchange edges incident to `id`, sorted by (exchange name, peer name,
/// index). The triple always reads source -> target regardless of which end
/// the traversal reached first.
fn exchange_edges(model: &SystemModel, id: &str) -> Vec<(EdgeId, Triple, EntityRef)> {
    let mut incident: Vec<(usize, EntityRef)> = Vec::new();
    for (i, e) in model.exchanges.iter().enumerate() {
        let peer_id = if e.source == id {
            &e.target
        } else if e.target == id {
            &e.source
        } else {
            continue;
        };
        if let Some(peer) = model.entity_by_id(peer_id) {
            incident.push((i, peer));
        }
    }
    incident.sort_by(|&(ia, pa), &(ib, pb)| {
        model.exchanges[ia]
            .name
            .cmp(&model.exchanges[ib].name)
            .then(model.entity_name(pa).cmp(model.entity_name(pb)))
            .then(ia.cmp(&ib))
    });
    incident
        .into_iter()
        .map(|(i, peer)| {
            let e = &model.exchanges[i];
            let source = model.entity_by_id(&e.source).expect("validated endpoint");
            let target = model.entity_by_id(&e.target).expect("validated endpoint");
            (
                EdgeId::Exchange(i),
                Triple::new(
                    model.entity_name(source),
                    &e.name,
                    model.entity_name(target),
                ),
                peer,
            )
        })
        .collect()
}
