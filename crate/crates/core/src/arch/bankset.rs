use std::fmt;

use serde::{Deserialize, Serialize};

/// Set of register-bank indices (`< 128`).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BankSet(u128);

impl BankSet {
    pub const EMPTY: BankSet = BankSet(0);

    pub fn full(banks: usize) -> Self {
        debug_assert!(banks <= 128);
        if banks == 128 {
            BankSet(u128::MAX)
        } else {
            BankSet((1u128 << banks) - 1)
        }
    }

    /// Banks `start .. start + len`.
    pub fn range(start: usize, len: usize) -> Self {
        BankSet(Self::full(len).0 << start)
    }

    pub fn single(bank: usize) -> Self {
        BankSet(1u128 << bank)
    }

    pub fn from_bits(bits: u128) -> Self {
        BankSet(bits)
    }

    pub fn bits(self) -> u128 {
        self.0
    }

    pub fn contains(self, bank: usize) -> bool {
        bank < 128 && self.0 >> bank & 1 == 1
    }

    pub fn insert(&mut self, bank: usize) {
        self.0 |= 1u128 << bank;
    }

    pub fn remove(&mut self, bank: usize) {
        self.0 &= !(1u128 << bank);
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, o: BankSet) -> BankSet {
        BankSet(self.0 | o.0)
    }

    pub fn intersect(self, o: BankSet) -> BankSet {
        BankSet(self.0 & o.0)
    }

    pub fn minus(self, o: BankSet) -> BankSet {
        BankSet(self.0 & !o.0)
    }

    pub fn is_subset(self, o: BankSet) -> bool {
        self.0 & !o.0 == 0
    }

    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    /// The `k`-th smallest member.
    pub fn nth(self, k: usize) -> Option<usize> {
        self.iter().nth(k)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let b = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(b)
        })
    }
}

impl FromIterator<usize> for BankSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = BankSet::EMPTY;
        for b in iter {
            s.insert(b);
        }
        s
    }
}

impl fmt::Debug for BankSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
