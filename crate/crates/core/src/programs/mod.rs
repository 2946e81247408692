//! Cooling programs as lazily traversed instruction streams.
//!
//! The recursive algorithms expand to instruction counts that grow
//! exponentially with the number of spins (2PAC on 7 spins already needs
//! 187 resets, and sweep grids reach n = 21). Programs are therefore
//! stored as a small DAG of sequence/repeat nodes; traversal walks the
//! DAG with an explicit stack, producing one `Instruction` at a time in
//! O(depth) memory. Shared subprograms (the recursion bodies) exist once
//! in the arena no matter how often they are referenced.

mod builders;
pub(crate) mod ideal;

pub use builders::{
    build_delta_fibonacci, build_fibonacci, build_mpac, build_mpac_all, build_new_bonacci,
    build_tribonacci, Algorithm, MTable, NewBonacciSpec,
};

use std::fmt;

use serde::{Deserialize, Serialize};

/// One step of a cooling program. Spin indices are 1-based; compression
/// gates act on a window ending at their least significant spin
/// (`C3 { k }` acts on spins k, k-1, k-2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instruction {
    /// Idle for the configured WAIT duration; the only step that consumes
    /// time and the only one that touches the bath.
    Wait,
    /// Polarization transfer, implemented as a full SWAP of `src` and `dst`.
    Pt { src: u32, dst: u32 },
    /// 2-bit compression: SWAP of spins k and k-1.
    C2 { k: u32 },
    /// 3-bit compression |100> <-> |011> on spins (k, k-1, k-2).
    C3 { k: u32 },
    /// 4-bit compression |1000> <-> |0111> on spins (k .. k-3).
    C4 { k: u32 },
    /// Sort the full probability distribution (partner pairing); only the
    /// oracle backend can execute this.
    Sort,
}

impl Instruction {
    /// Spins the instruction acts on, as an inclusive (low, high) range.
    /// SORT touches everything; WAIT touches nothing by this definition
    /// (relaxation is ambient, not a gate).
    pub fn window(&self) -> Option<(u32, u32)> {
        match *self {
            Instruction::Wait => None,
            Instruction::Pt { src, dst } => Some((src.min(dst), src.max(dst))),
            Instruction::C2 { k } => Some((k - 1, k)),
            Instruction::C3 { k } => Some((k - 2, k)),
            Instruction::C4 { k } => Some((k - 3, k)),
            Instruction::Sort => Some((1, u32::MAX)),
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instruction::Wait => write!(f, "WAIT"),
            Instruction::Pt { src, dst } => write!(f, "PT({src}->{dst})"),
            Instruction::C2 { k } => write!(f, "2BC({k})"),
            Instruction::C3 { k } => write!(f, "3BC({k})"),
            Instruction::C4 { k } => write!(f, "4BC({k})"),
            Instruction::Sort => write!(f, "SORT"),
        }
    }
}

/// Identifier of an arena node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(u32);

#[derive(Debug, Clone)]
enum Node {
    Instr(Instruction),
    Seq(Vec<NodeId>),
    Rep { times: u32, body: NodeId },
}

/// Descriptive metadata attached to a built program, carried through to
/// CLI reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramMeta {
    pub name: String,
    pub n: u32,
    /// Builder parameters (m, j, delta, the m-table, ...), shape varies
    /// per algorithm.
    pub params: serde_json::Value,
}

/// A cooling program: instruction stream plus metadata. Two traversals
/// always yield identical streams.
#[derive(Debug, Clone)]
pub struct Program {
    nodes: Vec<Node>,
    root: NodeId,
    meta: ProgramMeta,
}

/// Incremental arena construction. Children must be created before the
/// nodes that reference them, which also guarantees the arena is acyclic.
pub struct ProgramBuilder {
    nodes: Vec<Node>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        ProgramBuilder { nodes: Vec::new() }
    }

    fn push(&mut self, node: Node) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node);
        id
    }

    pub fn instr(&mut self, i: Instruction) -> NodeId {
        self.push(Node::Instr(i))
    }

    pub fn seq(&mut self, children: &[NodeId]) -> NodeId {
        for c in children {
            assert!((c.0 as usize) < self.nodes.len(), "child created after parent");
        }
        self.push(Node::Seq(children.to_vec()))
    }

    pub fn repeat(&mut self, times: u32, body: NodeId) -> NodeId {
        assert!((body.0 as usize) < self.nodes.len(), "body created after parent");
        self.push(Node::Rep { times, body })
    }

    pub fn finish(self, root: NodeId, meta: ProgramMeta) -> Program {
        assert!((root.0 as usize) < self.nodes.len(), "root out of range");
        Program { nodes: self.nodes, root, meta }
    }
}

impl Default for ProgramBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl Program {
    /// The empty program (zero instructions).
    pub fn empty(meta: ProgramMeta) -> Self {
        let mut b = ProgramBuilder::new();
        let root = b.seq(&[]);
        b.finish(root, meta)
    }

    pub fn meta(&self) -> &ProgramMeta {
        &self.meta
    }

    /// Lazy traversal of the instruction stream.
    pub fn iter(&self) -> Instructions<'_> {
        Instructions { prog: self, stack: vec![Frame { node: self.root, pos: 0 }] }
    }

    /// Number of instructions matching `pred`, via dynamic programming
    /// over the DAG (no traversal of repeated bodies).
    pub fn count_where(&self, pred: impl Fn(&Instruction) -> bool) -> u64 {
        let mut counts = vec![0u64; self.nodes.len()];
        for (idx, node) in self.nodes.iter().enumerate() {
            counts[idx] = match node {
                Node::Instr(i) => u64::from(pred(i)),
                Node::Seq(children) => children.iter().map(|c| counts[c.0 as usize]).sum(),
                Node::Rep { times, body } => u64::from(*times) * counts[body.0 as usize],
            };
        }
        counts[self.root.0 as usize]
    }

    /// Total number of WAIT (reset) steps, N_r.
    pub fn count_resets(&self) -> u64 {
        self.count_where(|i| matches!(i, Instruction::Wait))
    }

    /// Total instruction count.
    pub fn len(&self) -> u64 {
        self.count_where(|_| true)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Highest spin index referenced by any gate.
    pub fn max_spin(&self) -> u32 {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Instr(i) => match *i {
                    Instruction::Wait | Instruction::Sort => None,
                    Instruction::Pt { src, dst } => Some(src.max(dst)),
                    Instruction::C2 { k } | Instruction::C3 { k } | Instruction::C4 { k } => {
                        Some(k)
                    }
                },
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    node: NodeId,
    /// Next child index for Seq nodes; completed repetitions for Rep.
    pos: u32,
}

/// Stack-based DAG walker; memory use is bounded by the recursion depth
/// of the builder, not by the stream length.
#[derive(Clone)]
pub struct Instructions<'a> {
    prog: &'a Program,
    stack: Vec<Frame>,
}

impl Iterator for Instructions<'_> {
    type Item = Instruction;

    fn next(&mut self) -> Option<Instruction> {
        loop {
            let frame = *self.stack.last()?;
            match &self.prog.nodes[frame.node.0 as usize] {
                Node::Instr(i) => {
                    self.stack.pop();
                    return Some(*i);
                }
                Node::Seq(children) => {
                    if (frame.pos as usize) < children.len() {
                        self.stack.last_mut().unwrap().pos += 1;
                        self.stack.push(Frame { node: children[frame.pos as usize], pos: 0 });
                    } else {
                        self.stack.pop();
                    }
                }
                Node::Rep { times, body } => {
                    if frame.pos < *times {
                        self.stack.last_mut().unwrap().pos += 1;
                        self.stack.push(Frame { node: *body, pos: 0 });
                    } else {
                        self.stack.pop();
                    }
                }
            }
        }
    }
}

/// Optional peephole pass: drop a WAIT when no gate has touched a reset
/// spin since the previous WAIT (the reset spins are then already at
/// their post-reset biases, making the step redundant). Off by default
/// everywhere so trajectories match the published sequences.
pub fn peephole<I: Iterator<Item = Instruction>>(
    inner: I,
    reset_count: u32,
) -> impl Iterator<Item = Instruction> {
    Peephole { inner, reset_count, dirty: true }
}

struct Peephole<I> {
    inner: I,
    reset_count: u32,
    dirty: bool,
}

impl<I: Iterator<Item = Instruction>> Iterator for Peephole<I> {
    type Item = Instruction;

    fn next(&mut self) -> Option<Instruction> {
        loop {
            let instr = self.inner.next()?;
            match instr {
                Instruction::Wait => {
                    if self.dirty {
                        self.dirty = false;
                        return Some(instr);
                    }
                    // redundant reset: skip and keep scanning
                }
                _ => {
                    if let Some((lo, _)) = instr.window() {
                        if lo <= self.reset_count {
                            self.dirty = true;
                        }
                    }
                    return Some(instr);
                }
            }
        }
    }
}
