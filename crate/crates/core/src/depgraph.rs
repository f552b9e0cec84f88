//! Dependency DAG over steps. Edges always point forward in time, which keeps
//! the graph acyclic by construction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linker::Association;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge {from} -> {to} does not point forward in step order")]
    CycleDetected { from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub from_step: usize,
    pub to_step: usize,
    pub shared_objects: BTreeSet<String>,
    /// Added by a user rather than derived from shared objects; may carry no objects.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub manual: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub step_count: usize,
    pub edges: Vec<DependencyEdge>,
}

/// Chains each object's steps in ascending order and merges parallel edges.
pub fn build_dependencies(step_count: usize, associations: &[Association]) -> DependencyGraph {
    let mut steps_by_object: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for a in associations.iter().filter(|a| a.step_index < step_count) {
        steps_by_object.entry(&a.object_name).or_default().insert(a.step_index);
    }
    let mut merged: BTreeMap<(usize, usize), BTreeSet<String>> = BTreeMap::new();
    for (object, steps) in &steps_by_object {
        let steps: Vec<usize> = steps.iter().copied().collect();
        for pair in steps.windows(2) {
            merged.entry((pair[0], pair[1])).or_default().insert(object.to_string());
        }
    }
    DependencyGraph {
        step_count,
        edges: merged
            .into_iter()
            .map(|((from_step, to_step), shared_objects)| DependencyEdge {
                from_step,
                to_step,
                shared_objects,
                manual: false,
            })
            .collect(),
    }
}

/// Every edge must point from an earlier step to a later one.
pub fn validate_acyclic(graph: &DependencyGraph) -> Result<(), GraphError> {
    match graph.edges.iter().find(|e| e.from_step >= e.to_step) {
        Some(e) => Err(GraphError::CycleDetected {
            from: e.from_step,
            to: e.to_step,
        }),
        None => Ok(()),
    }
}

impl DependencyGraph {
    pub fn edge(&self, from: usize, to: usize) -> Option<&DependencyEdge> {
        self.edges.iter().find(|e| e.from_step == from && e.to_step == to)
    }

    /// Adds or merges an edge, rejecting anything that would break step order.
    pub fn add_edge(&mut self, edge: DependencyEdge) -> Result<(), GraphError> {
        if edge.from_step >= edge.to_step {
            return Err(GraphError::CycleDetected {
                from: edge.from_step,
                to: edge.to_step,
            });
        }
        match self
            .edges
            .iter_mut()
            .find(|e| e.from_step == edge.from_step && e.to_step == edge.to_step)
        {
            Some(existing) => {
                existing.shared_objects.extend(edge.shared_objects);
                existing.manual |= edge.manual;
            }
            None => {
                self.edges.push(edge);
                self.edges.sort_by_key(|e| (e.from_step, e.to_step));
            }
        }
        Ok(())
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) -> bool {
        let before = self.edges.len();
        self.edges.retain(|e| !(e.from_step == from && e.to_step == to));
        self.edges.len() != before
    }

    /// Drops edges touching `step` and shifts later step indices down by one.
    pub fn remove_step(&mut self, step: usize) {
        self.edges.retain(|e| e.from_step != step && e.to_step != step);
        for e in &mut self.edges {
            if e.from_step > step {
                e.from_step -= 1;
            }
            if e.to_step > step {
                e.to_step -= 1;
            }
        }
        self.step_count = self.step_count.saturating_sub(1);
    }

    /// Shifts indices at or after `step` up by one to make room for a new step.
    pub fn insert_step(&mut self, step: usize) {
        for e in &mut self.edges {
            if e.from_step >= step {
                e.from_step += 1;
            }
            if e.to_step >= step {
                e.to_step += 1;
            }
        }
        self.step_count += 1;
    }
}
