use std::collections::HashSet;

use crate::Tensor;

/// Topologically ordered view of the graph below one tensor.
///
/// Nodes are listed parents-before-children; reverse iteration is a valid
/// gradient propagation order. Shared subexpressions appear exactly once, so
/// their gradient contributions from different consumers accumulate instead
/// of overwriting each other.
pub struct ComputeGraph {
    nodes: Vec<Tensor>,
}

impl ComputeGraph {
    /// Collects every node reachable from `root` in topological order.
    pub fn trace(root: &Tensor) -> ComputeGraph {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        // Iterative post-order: (node, child cursor) pairs.
        let mut stack: Vec<(Tensor, usize)> = vec![(root.clone(), 0)];
        seen.insert(root.id());
        while let Some((node, cursor)) = stack.pop() {
            let parents = node.parents();
            if cursor < parents.len() {
                let next = parents[cursor].clone();
                stack.push((node, cursor + 1));
                if seen.insert(next.id()) {
                    stack.push((next, 0));
                }
            } else {
                order.push(node);
            }
        }
        ComputeGraph { nodes: order }
    }

    /// Nodes in topological order; the traced root is last.
    pub fn nodes(&self) -> &[Tensor] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Runs reverse-mode accumulation from `root`, which must be the scalar
    /// this graph was traced from.
    pub fn backward(&self, root: &Tensor) {
        assert!(
            root.len() == 1,
            "backward needs a scalar root, got shape {:?}",
            root.shape()
        );
        assert!(
            self.nodes.last().map(Tensor::id) == Some(root.id()),
            "backward root is not the traced root of this graph"
        );
        if !root.needs_grad() {
            return;
        }
        root.accumulate_grad(&[1.0]);
        for node in self.nodes.iter().rev() {
            if !node.needs_grad() {
                continue;
            }
            let grad = node.grad();
            if let Some(g) = grad {
                node.run_backward(&g);
            }
            // Interior gradients are scratch space for the pass; only leaves
            // keep theirs so optimizers read stable buffers.
            if !node.requires_grad() {
                node.zero_grad();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_orders_parents_first() {
        let x = Tensor::param(&[2], vec![1.0, 2.0]);
        let y = x.mul(&x);
        let z = y.sum();
        let graph = ComputeGraph::trace(&z);
        let pos = |t: &Tensor| {
            graph
                .nodes()
                .iter()
                .position(|n| n.id() == t.id())
                .unwrap()
        };
        assert!(pos(&x) < pos(&y));
        assert!(pos(&y) < pos(&z));
        assert_eq!(graph.len(), 3);
    }

    #[test]
    fn shared_subexpression_appears_once_and_accumulates() {
        let x = Tensor::param(&[3], vec![1.0, 2.0, 3.0]);
        let s = x.sum();
        let total = s.add(&s);
        let graph = ComputeGraph::trace(&total);
        assert_eq!(graph.len(), 3);
        graph.backward(&total);
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    #[should_panic(expected = "backward needs a scalar root")]
    fn backward_rejects_non_scalar_root() {
        let x = Tensor::param(&[2], vec![1.0, 2.0]);
        let y = x.mul(&x);
        ComputeGraph::trace(&y).backward(&y);
    }

    #[test]
    fn diamond_graph_sums_both_paths() {
        // z = x*x + x*x: each branch contributes 2x, total 4x.
        let x = Tensor::param(&[1], vec![3.0]);
        let a = x.mul(&x);
        let b = x.mul(&x);
        let z = a.add(&b).sum();
        z.backward();
        assert_eq!(x.grad().unwrap(), vec![12.0]);
    }
}
