use super::model::{NetConfig, INTRUDER_FEATURES, NUM_ACTIONS};
use crate::observation::STATE_DIM;

/// A named, shaped slice of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of every parameter block. Weight matrices are row-major
/// `[out, in]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub blocks: Vec<Block>,
    pub total: usize,
    pub own_w1: usize,
    pub own_b1: usize,
    pub own_w2: usize,
    pub own_b2: usize,
    pub int_w1: usize,
    pub int_b1: usize,
    pub int_w2: usize,
    pub int_b2: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub pol_w1: usize,
    pub pol_b1: usize,
    pub pol_w2: usize,
    pub pol_b2: usize,
    pub val_w1: usize,
    pub val_b1: usize,
    pub val_w2: usize,
    pub val_b2: usize,
}

impl Layout {
    pub fn new(cfg: &NetConfig) -> Self {
        let h = cfg.hidden;
        let a = cfg.heads * cfg.head_dim;
        let f = cfg.head_hidden;
        let cat = h + a;
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |name: &'static str, shape: Vec<usize>| {
            let b = Block { name, offset, shape };
            offset += b.len();
            let at = b.offset;
            blocks.push(b);
            at
        };
        let own_w1 = push("own.w1", vec![h, STATE_DIM]);
        let own_b1 = push("own.b1", vec![h]);
        let own_w2 = push("own.w2", vec![h, h]);
        let own_b2 = push("own.b2", vec![h]);
        let int_w1 = push("intruder.w1", vec![h, INTRUDER_FEATURES]);
        let int_b1 = push("intruder.b1", vec![h]);
        let int_w2 = push("intruder.w2", vec![h, h]);
        let int_b2 = push("intruder.b2", vec![h]);
        let wq = push("attention.wq", vec![a, h]);
        let wk = push("attention.wk", vec![a, h]);
        let wv = push("attention.wv", vec![a, h]);
        let pol_w1 = push("policy.w1", vec![f, cat]);
        let pol_b1 = push("policy.b1", vec![f]);
        let pol_w2 = push("policy.w2", vec![NUM_ACTIONS, f]);
        let pol_b2 = push("policy.b2", vec![NUM_ACTIONS]);
        let val_w1 = push("value.w1", vec![f, cat]);
        let val_b1 = push("value.b1", vec![f]);
        let val_w2 = push("value.w2", vec![1, f]);
        let val_b2 = push("value.b2", vec![1]);
        Self {
            blocks,
            total: offset,
            own_w1,
            own_b1,
            own_w2,
            own_b2,
            int_w1,
            int_b1,
            int_w2,
            int_b2,
            wq,
            wk,
            wv,
            pol_w1,
            pol_b1,
            pol_w2,
            pol_b2,
            val_w1,
            val_b1,
            val_w2,
            val_b2,
        }
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }
}
