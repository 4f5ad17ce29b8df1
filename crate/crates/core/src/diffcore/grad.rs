use std::collections::{HashMap, HashSet};

use super::node::{Node, OpKind};
use super::{DiffError, Tensor};

/// Reverse-mode gradient of a scalar `output` with respect to `wrt`.
///
/// The returned gradients are ordinary graph nodes built from the same
/// primitive set as the forward pass, so they can be differentiated again
/// (second derivatives via `gradient(gradient(..))`). Nodes in `wrt` that
/// have no path to `output` receive a zero gradient of matching shape.
///
/// Traversal and accumulation follow the structural operand order of the
/// graph, never any hash order, so results are bit-reproducible.
pub fn gradient(output: &Node, wrt: &[Node]) -> Result<Vec<Node>, DiffError> {
    if output.numel() != 1 {
        return Err(DiffError::NonScalarOutput {
            shape: output.shape().to_vec(),
        });
    }
    for (index, w) in wrt.iter().enumerate() {
        if !w.requires_grad() {
            return Err(DiffError::NotDifferentiable { index });
        }
    }

    let topo = topological_order(output);
    let mut adjoint: HashMap<u64, Node> = HashMap::new();
    adjoint.insert(
        output.id(),
        Node::constant(Tensor::ones(output.shape().to_vec())),
    );

    // Children appear before parents in `topo`; walk parents first.
    for node in topo.iter().rev() {
        let Some(g) = adjoint.get(&node.id()).cloned() else {
            continue;
        };
        for (operand, contribution) in vjp(node, &g) {
            accumulate(&mut adjoint, &operand, contribution);
        }
    }

    Ok(wrt
        .iter()
        .map(|w| {
            adjoint
                .get(&w.id())
                .cloned()
                .unwrap_or_else(|| Node::constant(Tensor::zeros(w.shape().to_vec())))
        })
        .collect())
}

fn accumulate(adjoint: &mut HashMap<u64, Node>, operand: &Node, contribution: Node) {
    match adjoint.remove(&operand.id()) {
        Some(existing) => {
            adjoint.insert(operand.id(), &existing + &contribution);
        }
        None => {
            adjoint.insert(operand.id(), contribution);
        }
    }
}

/// Post-order over the requires-grad subgraph reachable from `root`.
fn topological_order(root: &Node) -> Vec<Node> {
    let mut topo = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Node, usize)> = Vec::new();
    visited.insert(root.id());
    stack.push((root.clone(), 0));
    while let Some((node, from)) = stack.pop() {
        let operands = node.operands();
        let mut descended = false;
        for j in from..operands.len() {
            let child = &operands[j];
            if child.requires_grad() && !visited.contains(&child.id()) {
                visited.insert(child.id());
                let grandchild = child.clone();
                stack.push((node.clone(), j + 1));
                stack.push((grandchild, 0));
                descended = true;
                break;
            }
        }
        if !descended {
            topo.push(node);
        }
    }
    topo
}

/// Vector-Jacobian products of one node: contributions of the output
/// adjoint `g` to each differentiable operand, expressed with primitives.
fn vjp(node: &Node, g: &Node) -> Vec<(Node, Node)> {
    let ops = node.operands();
    let mut out: Vec<(Node, Node)> = Vec::new();
    let mut push = |operand: &Node, grad: Node| {
        if operand.requires_grad() {
            out.push((operand.clone(), grad));
        }
    };
    match node.kind() {
        OpKind::Leaf => {}
        OpKind::Add => {
            push(&ops[0], g.sum_to(ops[0].shape().to_vec()));
            push(&ops[1], g.sum_to(ops[1].shape().to_vec()));
        }
        OpKind::Sub => {
            push(&ops[0], g.sum_to(ops[0].shape().to_vec()));
            push(&ops[1], g.sum_to(ops[1].shape().to_vec()).neg());
        }
        OpKind::Mul => {
            push(&ops[0], (g * &ops[1]).sum_to(ops[0].shape().to_vec()));
            push(&ops[1], (g * &ops[0]).sum_to(ops[1].shape().to_vec()));
        }
        OpKind::Div => {
            push(&ops[0], (g / &ops[1]).sum_to(ops[0].shape().to_vec()));
            // d(a/b)/db = -(a/b)/b; reuse the output node for a/b.
            let db = &(&(g * node) / &ops[1]).neg();
            push(&ops[1], db.sum_to(ops[1].shape().to_vec()));
        }
        OpKind::Neg => {
            push(&ops[0], g.neg());
        }
        OpKind::MatMul => {
            push(&ops[0], g.matmul(&ops[1].transpose()));
            push(&ops[1], ops[0].transpose().matmul(g));
        }
        OpKind::Transpose => {
            push(&ops[0], g.transpose());
        }
        OpKind::Sum => {
            push(&ops[0], g.broadcast(ops[0].shape().to_vec()));
        }
        OpKind::Mean => {
            let n = ops[0].numel().max(1) as f64;
            push(&ops[0], g.scale(1.0 / n).broadcast(ops[0].shape().to_vec()));
        }
        OpKind::Broadcast(_) => {
            push(&ops[0], g.sum_to(ops[0].shape().to_vec()));
        }
        OpKind::SumTo(_) => {
            push(&ops[0], g.broadcast(ops[0].shape().to_vec()));
        }
        OpKind::Reshape(_) => {
            push(&ops[0], g.reshape(ops[0].shape().to_vec()));
        }
        OpKind::Exp => {
            push(&ops[0], g * node);
        }
        OpKind::Log => {
            push(&ops[0], g / &ops[0]);
        }
        OpKind::Tanh => {
            let one_minus_sq = &Node::scalar(1.0) - &node.square();
            push(&ops[0], g * &one_minus_sq);
        }
        OpKind::Sigmoid => {
            let deriv = node * &(&Node::scalar(1.0) - node);
            push(&ops[0], g * &deriv);
        }
        OpKind::Square => {
            push(&ops[0], g * &ops[0].scale(2.0));
        }
        OpKind::LogSumExp(axis) => {
            // Softmax of the input times the (re-expanded) adjoint.
            let mut keep = ops[0].shape().to_vec();
            keep[*axis] = 1;
            let y = node.reshape(keep.clone()).broadcast(ops[0].shape().to_vec());
            let ge = g.reshape(keep).broadcast(ops[0].shape().to_vec());
            push(&ops[0], &ge * &(&ops[0] - &y).exp());
        }
        OpKind::Concat(axis) => {
            let mut offset = 0;
            for op in ops {
                let len = op.shape()[*axis];
                push(op, g.slice(*axis, offset, offset + len));
                offset += len;
            }
        }
        OpKind::Slice { axis, start, stop } => {
            let shape = ops[0].shape().to_vec();
            let mut parts: Vec<Node> = Vec::with_capacity(3);
            if *start > 0 {
                let mut s = shape.clone();
                s[*axis] = *start;
                parts.push(Node::constant(Tensor::zeros(s)));
            }
            parts.push(g.clone());
            if *stop < shape[*axis] {
                let mut s = shape.clone();
                s[*axis] = shape[*axis] - stop;
                parts.push(Node::constant(Tensor::zeros(s)));
            }
            let grad = if parts.len() == 1 {
                parts.pop().expect("one part")
            } else {
                Node::concat(&parts, *axis)
            };
            push(&ops[0], grad);
        }
    }
    out
}
