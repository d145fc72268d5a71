//! Ground sets, item subsets and item orderings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A subset of a ground set `{0, .., n-1}`, stored as a membership vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ItemSet {
    members: Vec<bool>,
    count: usize,
}

impl ItemSet {
    pub fn empty(n: usize) -> Self {
        ItemSet { members: vec![false; n], count: 0 }
    }

    pub fn full(n: usize) -> Self {
        ItemSet { members: vec![true; n], count: n }
    }

    pub fn from_items(n: usize, items: &[usize]) -> Result<Self> {
        let mut s = ItemSet::empty(n);
        for &e in items {
            s.insert(e)?;
        }
        Ok(s)
    }

    /// Build from the low `n` bits of a mask (bit i set means item i is in).
    pub fn from_mask(n: usize, mask: u64) -> Self {
        let mut s = ItemSet::empty(n);
        for i in 0..n {
            if mask >> i & 1 == 1 {
                s.members[i] = true;
                s.count += 1;
            }
        }
        s
    }

    pub fn to_mask(&self) -> u64 {
        assert!(self.n() <= 64);
        let mut m = 0u64;
        for i in self.iter() {
            m |= 1 << i;
        }
        m
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, e: usize) -> bool {
        e < self.members.len() && self.members[e]
    }

    pub fn check_item(&self, e: usize) -> Result<()> {
        if e >= self.members.len() {
            return Err(Error::ItemOutOfRange { item: e, n: self.members.len() });
        }
        Ok(())
    }

    pub fn insert(&mut self, e: usize) -> Result<()> {
        self.check_item(e)?;
        if self.members[e] {
            return Err(Error::ItemInSet(e));
        }
        self.members[e] = true;
        self.count += 1;
        Ok(())
    }

    pub fn remove(&mut self, e: usize) -> Result<()> {
        self.check_item(e)?;
        if !self.members[e] {
            return Err(Error::ItemNotInSet(e));
        }
        self.members[e] = false;
        self.count -= 1;
        Ok(())
    }

    pub fn with(&self, e: usize) -> Result<Self> {
        let mut s = self.clone();
        s.insert(e)?;
        Ok(s)
    }

    pub fn without(&self, e: usize) -> Result<Self> {
        let mut s = self.clone();
        s.remove(e)?;
        Ok(s)
    }

    pub fn complement(&self) -> Self {
        ItemSet {
            members: self.members.iter().map(|&m| !m).collect(),
            count: self.members.len() - self.count,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn to_sorted_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

/// Permutation in which the items of a ground set are visited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemOrder {
    perm: Vec<usize>,
    pub provenance: OrderProvenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderProvenance {
    Identity,
    ByEmpiricalFrequency,
    Explicit,
}

impl ItemOrder {
    pub fn identity(n: usize) -> Self {
        ItemOrder { perm: (0..n).collect(), provenance: OrderProvenance::Identity }
    }

    pub fn explicit(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &e in &perm {
            if e >= n || seen[e] {
                return Err(Error::Config(format!("not a valid permutation of 0..{n}")));
            }
            seen[e] = true;
        }
        Ok(ItemOrder { perm, provenance: OrderProvenance::Explicit })
    }

    pub(crate) fn from_perm(perm: Vec<usize>, provenance: OrderProvenance) -> Self {
        ItemOrder { perm, provenance }
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// Item visited at step `i`.
    pub fn item_at(&self, i: usize) -> usize {
        self.perm[i]
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }
}
