//! GP trees and the record machine they drive.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::allocation::{BoundedVector, MAX_VECTOR_LEN, ZERO_REPLACEMENT};

/// Value written by `ZeroRecord`.
pub const ZERO_RECORD_VALUE: f64 = 0.00001;
/// Divisors smaller than this in magnitude are replaced by 1.
pub const DIVIDE_GUARD: f64 = 1.0e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum NodeKind {
    Constant,
    SConstant,
    AddNumber,
    SubtractNumber,
    MultiplyNumber,
    DivideNumber,
    AverageNumber,
    SubRecord,
    ZeroRecord,
    WriteRecord,
    AddRecord,
    GetMem1,
    SetMem1,
    GetMem2,
    SetMem2,
}

impl NodeKind {
    pub const ALL: [NodeKind; 15] = [
        NodeKind::Constant,
        NodeKind::SConstant,
        NodeKind::AddNumber,
        NodeKind::SubtractNumber,
        NodeKind::MultiplyNumber,
        NodeKind::DivideNumber,
        NodeKind::AverageNumber,
        NodeKind::SubRecord,
        NodeKind::ZeroRecord,
        NodeKind::WriteRecord,
        NodeKind::AddRecord,
        NodeKind::GetMem1,
        NodeKind::SetMem1,
        NodeKind::GetMem2,
        NodeKind::SetMem2,
    ];
    pub const TERMINALS: [NodeKind; 2] = [NodeKind::Constant, NodeKind::SConstant];
    pub const FUNCTIONS: [NodeKind; 13] = [
        NodeKind::AddNumber,
        NodeKind::SubtractNumber,
        NodeKind::MultiplyNumber,
        NodeKind::DivideNumber,
        NodeKind::AverageNumber,
        NodeKind::SubRecord,
        NodeKind::ZeroRecord,
        NodeKind::WriteRecord,
        NodeKind::AddRecord,
        NodeKind::GetMem1,
        NodeKind::SetMem1,
        NodeKind::GetMem2,
        NodeKind::SetMem2,
    ];

    pub fn arity(self) -> usize {
        match self {
            NodeKind::Constant | NodeKind::SConstant => 0,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Constant => "Constant",
            NodeKind::SConstant => "sConstant",
            NodeKind::AddNumber => "AddNumber",
            NodeKind::SubtractNumber => "SubtractNumber",
            NodeKind::MultiplyNumber => "MultiplyNumber",
            NodeKind::DivideNumber => "DivideNumber",
            NodeKind::AverageNumber => "AverageNumber",
            NodeKind::SubRecord => "SubRecord",
            NodeKind::ZeroRecord => "ZeroRecord",
            NodeKind::WriteRecord => "WriteRecord",
            NodeKind::AddRecord => "AddRecord",
            NodeKind::GetMem1 => "GetMem1",
            NodeKind::SetMem1 => "SetMem1",
            NodeKind::GetMem2 => "GetMem2",
            NodeKind::SetMem2 => "SetMem2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// One node in prefix order. `arg` is the integer constant for `Constant`
/// (-127..=128) or the numerator `k` of `k/255` for `sConstant`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GpNode {
    pub kind: NodeKind,
    pub arg: i16,
}

impl GpNode {
    pub fn function(kind: NodeKind) -> Self {
        debug_assert_eq!(kind.arity(), 2);
        GpNode { kind, arg: 0 }
    }

    pub fn constant(value: i16) -> Self {
        debug_assert!((-127..=128).contains(&value));
        GpNode {
            kind: NodeKind::Constant,
            arg: value,
        }
    }

    pub fn sconstant(k: u8) -> Self {
        GpNode {
            kind: NodeKind::SConstant,
            arg: i16::from(k),
        }
    }

    pub fn value(self) -> f64 {
        match self.kind {
            NodeKind::Constant => f64::from(self.arg),
            NodeKind::SConstant => f64::from(self.arg) / 255.0,
            _ => 0.0,
        }
    }

    pub fn random_terminal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random_bool(0.5) {
            GpNode::constant(rng.random_range(-127..=128))
        } else {
            GpNode::sconstant(rng.random())
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("empty tree")]
    Empty,
    #[error("tree is incomplete or has trailing nodes")]
    Shape,
    #[error("tree has {0} nodes, over the limit")]
    TooLarge(usize),
    #[error("constant {0} out of range")]
    Constant(i16),
    #[error("parse error at token {0}: {1}")]
    Parse(usize, String),
}

/// Tree stored as a prefix-order node list.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GpTree {
    nodes: Vec<GpNode>,
}

impl GpTree {
    pub fn new(nodes: Vec<GpNode>) -> Result<Self, TreeError> {
        if nodes.is_empty() {
            return Err(TreeError::Empty);
        }
        if subtree_end(&nodes, 0) != Some(nodes.len()) {
            return Err(TreeError::Shape);
        }
        for n in &nodes {
            let ok = match n.kind {
                NodeKind::Constant => (-127..=128).contains(&n.arg),
                NodeKind::SConstant => (0..=255).contains(&n.arg),
                _ => true,
            };
            if !ok {
                return Err(TreeError::Constant(n.arg));
            }
        }
        Ok(GpTree { nodes })
    }

    pub(crate) fn from_nodes_unchecked(nodes: Vec<GpNode>) -> Self {
        debug_assert_eq!(subtree_end(&nodes, 0), Some(nodes.len()));
        GpTree { nodes }
    }

    pub fn nodes(&self) -> &[GpNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// One past the last node of the subtree rooted at `i`.
    pub fn subtree_end(&self, i: usize) -> usize {
        subtree_end(&self.nodes, i).expect("valid tree")
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[GpNode], i: usize) -> (usize, usize) {
            if nodes[i].kind.arity() == 0 {
                return (1, i + 1);
            }
            let (l, next) = go(nodes, i + 1);
            let (r, end) = go(nodes, next);
            (1 + l.max(r), end)
        }
        go(&self.nodes, 0).0
    }
}

pub(crate) fn subtree_end(nodes: &[GpNode], i: usize) -> Option<usize> {
    let mut open = 1usize;
    let mut j = i;
    while open > 0 {
        let n = nodes.get(j)?;
        open = open - 1 + n.kind.arity();
        j += 1;
    }
    Some(j)
}

impl fmt::Display for GpTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(nodes: &[GpNode], i: usize, f: &mut fmt::Formatter<'_>) -> Result<usize, fmt::Error> {
            let n = nodes[i];
            match n.kind {
                NodeKind::Constant | NodeKind::SConstant => {
                    write!(f, "({} {})", n.kind.name(), n.arg)?;
                    Ok(i + 1)
                }
                _ => {
                    write!(f, "({} ", n.kind.name())?;
                    let next = go(nodes, i + 1, f)?;
                    f.write_str(" ")?;
                    let end = go(nodes, next, f)?;
                    f.write_str(")")?;
                    Ok(end)
                }
            }
        }
        go(&self.nodes, 0, f).map(|_| ())
    }
}

impl FromStr for GpTree {
    type Err = TreeError;

    /// Parses the `Display` form, e.g. `(WriteRecord (Constant 5) (sConstant 3))`.
    /// `sConstant` takes the numerator `k` of `k/255`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let spaced = s.replace('(', " ( ").replace(')', " ) ");
        let tokens: Vec<&str> = spaced.split_whitespace().collect();
        let mut nodes = Vec::new();
        let mut pos = 0;
        let err = |pos: usize, msg: &str| TreeError::Parse(pos, msg.to_string());
        fn parse(
            tokens: &[&str],
            pos: &mut usize,
            nodes: &mut Vec<GpNode>,
            err: &dyn Fn(usize, &str) -> TreeError,
        ) -> Result<(), TreeError> {
            if tokens.get(*pos) != Some(&"(") {
                return Err(err(*pos, "expected '('"));
            }
            *pos += 1;
            let name = tokens.get(*pos).ok_or_else(|| err(*pos, "unexpected end"))?;
            let kind = NodeKind::from_name(name).ok_or_else(|| err(*pos, "unknown node"))?;
            *pos += 1;
            if kind.arity() == 0 {
                let arg: i16 = tokens
                    .get(*pos)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err(*pos, "expected integer"))?;
                *pos += 1;
                nodes.push(GpNode { kind, arg });
            } else {
                nodes.push(GpNode::function(kind));
                parse(tokens, pos, nodes, err)?;
                parse(tokens, pos, nodes, err)?;
            }
            if tokens.get(*pos) != Some(&")") {
                return Err(err(*pos, "expected ')'"));
            }
            *pos += 1;
            Ok(())
        }
        parse(&tokens, &mut pos, &mut nodes, &err)?;
        if pos != tokens.len() {
            return Err(err(pos, "trailing input"));
        }
        GpTree::new(nodes)
    }
}

/// Machine state after one node has been evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub node: usize,
    pub kind: NodeKind,
    pub returned: f64,
    pub p_r: usize,
    pub p_z: usize,
    pub m1: f64,
    pub m2: f64,
}

/// Result vector `r`, pointers and working memory. Pointers are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalState {
    r: Vec<f64>,
    pub p_r: usize,
    pub p_z: usize,
    pub m1: f64,
    pub m2: f64,
    trace: Option<Vec<TraceStep>>,
}

impl Default for EvalState {
    fn default() -> Self {
        EvalState {
            r: vec![ZERO_REPLACEMENT],
            p_r: 1,
            p_z: 1,
            m1: 0.0,
            m2: 0.0,
            trace: None,
        }
    }
}

impl EvalState {
    pub fn with_trace() -> Self {
        EvalState {
            trace: Some(Vec::new()),
            ..Self::default()
        }
    }

    pub fn reset(&mut self) {
        self.r.clear();
        self.r.push(ZERO_REPLACEMENT);
        self.p_r = 1;
        self.p_z = 1;
        self.m1 = 0.0;
        self.m2 = 0.0;
        if let Some(t) = &mut self.trace {
            t.clear();
        }
    }

    /// `r[1..=p_z]`.
    pub fn vector(&self) -> &[f64] {
        &self.r[..self.p_z]
    }

    pub fn trace(&self) -> Option<&[TraceStep]> {
        self.trace.as_deref()
    }

    /// Moves `p_r` forward by one, extending the vector if it passes `p_z`.
    fn advance(&mut self) {
        self.p_r = (self.p_r + 1).min(MAX_VECTOR_LEN);
        if self.p_r > self.p_z {
            self.p_z = self.p_r;
            self.r.resize(self.p_z, ZERO_REPLACEMENT);
        }
    }

    fn write(&mut self, v: f64) {
        self.r[self.p_r - 1] = v;
    }

    fn eval_node(&mut self, nodes: &[GpNode], i: usize) -> (f64, usize) {
        let node = nodes[i];
        let (out, end) = if node.kind.arity() == 0 {
            (node.value(), i + 1)
        } else {
            let (l, next) = self.eval_node(nodes, i + 1);
            let (r, end) = self.eval_node(nodes, next);
            let out = match node.kind {
                NodeKind::AddNumber => l + r,
                NodeKind::SubtractNumber => l - r,
                NodeKind::MultiplyNumber => l * r,
                NodeKind::DivideNumber => l / if r.abs() < DIVIDE_GUARD { 1.0 } else { r },
                NodeKind::AverageNumber => (l + r) / 2.0,
                NodeKind::SubRecord => {
                    if self.p_r > 1 {
                        self.p_r -= 1;
                    }
                    l
                }
                NodeKind::ZeroRecord => {
                    self.advance();
                    self.write(ZERO_RECORD_VALUE);
                    l
                }
                NodeKind::WriteRecord => {
                    self.advance();
                    self.write(l);
                    r
                }
                NodeKind::AddRecord => {
                    self.p_z = (self.p_z + 1).min(MAX_VECTOR_LEN);
                    self.r.resize(self.p_z, ZERO_REPLACEMENT);
                    self.p_r = self.p_z;
                    self.write(l);
                    l
                }
                NodeKind::GetMem1 => self.m1,
                NodeKind::GetMem2 => self.m2,
                NodeKind::SetMem1 => {
                    self.m1 = r;
                    l
                }
                NodeKind::SetMem2 => {
                    self.m2 = (self.m2 + l) / 2.0;
                    r
                }
                NodeKind::Constant | NodeKind::SConstant => unreachable!(),
            };
            (out, end)
        };
        if let Some(t) = &mut self.trace {
            t.push(TraceStep {
                node: i,
                kind: node.kind,
                returned: out,
                p_r: self.p_r,
                p_z: self.p_z,
                m1: self.m1,
                m2: self.m2,
            });
        }
        (out, end)
    }

    /// Evaluates `tree` from the current state; returns the root's value.
    pub fn run(&mut self, tree: &GpTree) -> f64 {
        self.eval_node(tree.nodes(), 0).0
    }
}

/// Raw result vector of `tree` from the initial machine state.
pub fn eval_tree(tree: &GpTree) -> Vec<f64> {
    let mut st = EvalState::default();
    st.run(tree);
    st.vector().to_vec()
}

/// Evaluated and bounded solution vector.
pub fn genotype_to_vector(tree: &GpTree) -> BoundedVector {
    BoundedVector::from_raw(&eval_tree(tree))
}
