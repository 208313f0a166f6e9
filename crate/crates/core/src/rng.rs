// SPDX-License-Identifier: Apache-2.0

//! Named, independently seeded random streams.
//!
//! Every stream is keyed by `(run seed, node, purpose)`; the key is mixed with
//! SplitMix64 into a ChaCha8 seed. Adding or removing a node therefore never
//! shifts the draws of any other stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nodes::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Purpose {
    /// Network latency for messages from the owning node to `dst`.
    Latency { dst: NodeId },
    Drop,
    PoetDraw,
    Processing,
}

impl Purpose {
    fn tag(self) -> (u64, u64) {
        match self {
            Purpose::Latency { dst } => (1, dst.0 as u64),
            Purpose::Drop => (2, 0),
            Purpose::PoetDraw => (3, 0),
            Purpose::Processing => (4, 0),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct RngStream {
    seed: u64,
    node: NodeId,
    purpose: Purpose,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, node: NodeId, purpose: Purpose) -> Self {
        let (kind, extra) = purpose.tag();
        let mut key = splitmix64(seed);
        key = splitmix64(key ^ node.0 as u64);
        key = splitmix64(key ^ kind);
        key = splitmix64(key ^ extra);
        RngStream {
            seed,
            node,
            purpose,
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn purpose(&self) -> Purpose {
        self.purpose
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
