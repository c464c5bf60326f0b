use std::fmt;

use serde::{Deserialize, Serialize};

/// Pre-order index of a node inside a [`Program`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Text routed to a module through utterance attention.
///
/// The executor treats the text as opaque; only grounding providers interpret it.
/// Token weights are optional and, when present, form a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceAttention {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl UtteranceAttention {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), weights: None }
    }

    /// Attach per-token weights; they must be nonnegative and sum to 1 within 1e-6.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, String> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("utterance attention weights must be finite and nonnegative".into());
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(format!("utterance attention weights sum to {total}, expected 1"));
        }
        self.weights = Some(weights);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub module: String,
    pub utterance: Option<UtteranceAttention>,
    pub children: Vec<NodeId>,
}

/// A module program. Nodes are stored densely in pre-order, so the root is always node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    nodes: Vec<Node>,
}

impl Program {
    /// Build from pre-order nodes. Fails unless every child list follows pre-order
    /// numbering, which makes the node set a tree with dense ids.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, String> {
        if nodes.is_empty() {
            return Err("program has no nodes".into());
        }
        // Children of node i must occupy a contiguous pre-order block after i.
        fn check(nodes: &[Node], id: usize) -> Result<usize, String> {
            let mut next = id + 1;
            for child in &nodes[id].children {
                if child.0 != next {
                    return Err(format!("node {id}: child {} is not in pre-order position {next}", child.0));
                }
                next = check(nodes, child.0)?;
            }
            Ok(next)
        }
        let end = check(&nodes, 0)?;
        if end != nodes.len() {
            return Err(format!("nodes {end}..{} are unreachable from the root", nodes.len()));
        }
        Ok(Self { nodes })
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    /// Ids of the subtree rooted at `id` (including `id`), in pre-order.
    pub fn subtree(&self, id: NodeId) -> std::ops::Range<usize> {
        let mut end = id.0 + 1;
        let mut stack: Vec<NodeId> = self.nodes[id.0].children.clone();
        while let Some(n) = stack.pop() {
            end = end.max(n.0 + 1);
            stack.extend(self.nodes[n.0].children.iter().copied());
        }
        id.0..end
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::linearize(self))
    }
}
