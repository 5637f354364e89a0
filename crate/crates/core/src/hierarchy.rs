//! Multi-index bookkeeping for the auxiliary density operators.
//!
//! An index n = (n₁, …, n_K) counts excitations of each expansion term; the
//! tier of n is Σ n_k and only tiers ≤ L are kept. Indices are ordered by
//! tier, and within a tier by descending first component, then descending
//! second, and so on: for K = 2, L = 2 the order is
//! (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neighbor-table entry for an index outside the truncated hierarchy.
pub const ABSENT: u32 = u32::MAX;

/// Default cap on the number of auxiliary matrices.
pub const DEFAULT_BUDGET: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HierarchyIndex(pub Vec<u8>);

impl HierarchyIndex {
    pub fn tier(&self) -> usize {
        self.0.iter().map(|&n| n as usize).sum()
    }
}

/// Binomial coefficient C(level + modes, modes), saturating.
pub fn ado_count(n_modes: usize, level: usize) -> usize {
    let mut c: u128 = 1;
    for i in 1..=n_modes.min(level) as u128 {
        let n = (level + n_modes) as u128;
        let k = n_modes.min(level) as u128;
        c = c * (n - k + i) / i;
        if c > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    c as usize
}

#[derive(Clone, Debug)]
pub struct Hierarchy {
    n_modes: usize,
    level: usize,
    /// Flat occupations, `n_modes` per index.
    occupations: Vec<u8>,
    /// `up[j * n_modes + k]` is the offset of n_j + e_k, or `ABSENT`.
    up: Vec<u32>,
    /// `down[j * n_modes + k]` is the offset of n_j − e_k, or `ABSENT`.
    down: Vec<u32>,
    lookup: HashMap<Vec<u8>, usize>,
}

fn compositions(total: usize, parts: usize, prefix: &mut Vec<u8>, out: &mut Vec<u8>) {
    if parts == 1 {
        prefix.push(total as u8);
        out.extend_from_slice(prefix);
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first as u8);
        compositions(total - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

/// All indices with tier ≤ `level`, with neighbor tables.
pub fn enumerate_hierarchy(n_modes: usize, level: usize, budget: usize) -> Result<Hierarchy> {
    if level > u8::MAX as usize {
        return Err(Error::Hierarchy(format!("level {level} exceeds 255")));
    }
    let count = ado_count(n_modes, level);
    if count > budget {
        return Err(Error::HierarchyBudget { count, budget });
    }
    if n_modes == 0 {
        return Ok(Hierarchy {
            n_modes,
            level,
            occupations: Vec::new(),
            up: Vec::new(),
            down: Vec::new(),
            lookup: HashMap::from([(Vec::new(), 0)]),
        });
    }

    let mut occupations = Vec::with_capacity(count * n_modes);
    let mut prefix = Vec::with_capacity(n_modes);
    for tier in 0..=level {
        compositions(tier, n_modes, &mut prefix, &mut occupations);
    }
    debug_assert_eq!(occupations.len(), count * n_modes);

    let lookup: HashMap<Vec<u8>, usize> = occupations
        .chunks(n_modes)
        .enumerate()
        .map(|(j, n)| (n.to_vec(), j))
        .collect();

    let mut up = vec![ABSENT; count * n_modes];
    let mut down = vec![ABSENT; count * n_modes];
    let mut scratch = vec![0u8; n_modes];
    for j in 0..count {
        let n = &occupations[j * n_modes..(j + 1) * n_modes];
        let tier: usize = n.iter().map(|&x| x as usize).sum();
        for k in 0..n_modes {
            scratch.copy_from_slice(n);
            if tier < level {
                scratch[k] += 1;
                up[j * n_modes + k] = lookup[&scratch] as u32;
                scratch[k] -= 1;
            }
            if n[k] > 0 {
                scratch[k] -= 1;
                down[j * n_modes + k] = lookup[&scratch] as u32;
            }
        }
    }

    Ok(Hierarchy {
        n_modes,
        level,
        occupations,
        up,
        down,
        lookup,
    })
}

impl Hierarchy {
    pub fn len(&self) -> usize {
        if self.n_modes == 0 {
            1
        } else {
            self.occupations.len() / self.n_modes
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn occupation(&self, j: usize) -> &[u8] {
        &self.occupations[j * self.n_modes..(j + 1) * self.n_modes]
    }

    pub fn index(&self, j: usize) -> HierarchyIndex {
        HierarchyIndex(self.occupation(j).to_vec())
    }

    pub fn offset_of(&self, n: &[u8]) -> Option<usize> {
        self.lookup.get(n).copied()
    }

    #[inline]
    pub fn up(&self, j: usize, k: usize) -> Option<usize> {
        let v = self.up[j * self.n_modes + k];
        (v != ABSENT).then_some(v as usize)
    }

    #[inline]
    pub fn down(&self, j: usize, k: usize) -> Option<usize> {
        let v = self.down[j * self.n_modes + k];
        (v != ABSENT).then_some(v as usize)
    }

    pub fn tier(&self, j: usize) -> usize {
        self.occupation(j).iter().map(|&n| n as usize).sum()
    }

    /// Compact description of the ordering, stored in checkpoints.
    pub fn descriptor(&self) -> String {
        format!("graded-reverse-lex modes={} level={} count={}", self.n_modes, self.level, self.len())
    }
}
