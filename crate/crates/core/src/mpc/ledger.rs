//! Per-category communication accounting.

use core::fmt;

/// Cost bucket a message is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Embed,
    Linear,
    Softmax,
    Sampling,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] =
        [Category::Embed, Category::Linear, Category::Softmax, Category::Sampling, Category::Other];

    #[inline]
    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Embed => "Embed",
            Category::Linear => "Linear",
            Category::Softmax => "Softmax",
            Category::Sampling => "Sampling",
            Category::Other => "Other",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub bytes: u64,
    pub rounds: u64,
    pub op_count: u64,
    pub wall_ns: u64,
}

impl Counters {
    fn accumulate(&mut self, other: &Counters) {
        self.bytes += other.bytes;
        self.rounds += other.rounds;
        self.op_count += other.op_count;
        self.wall_ns += other.wall_ns;
    }

    /// Componentwise `self - earlier`; counters never decrease.
    pub fn since(&self, earlier: &Counters) -> Counters {
        Counters {
            bytes: self.bytes - earlier.bytes,
            rounds: self.rounds - earlier.rounds,
            op_count: self.op_count - earlier.op_count,
            wall_ns: self.wall_ns.saturating_sub(earlier.wall_ns),
        }
    }
}

/// Monotone byte/round/operation counters, one set per [`Category`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    counters: [Counters; 5],
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, cat: Category, bytes: u64, rounds: u64) {
        let c = &mut self.counters[cat.index()];
        c.bytes += bytes;
        c.rounds += rounds;
        c.op_count += 1;
    }

    pub fn add_wall(&mut self, cat: Category, ns: u64) {
        self.counters[cat.index()].wall_ns += ns;
    }

    /// Overwrites the wall time of one category (for synthetic time models).
    pub fn set_wall(&mut self, cat: Category, ns: u64) {
        self.counters[cat.index()].wall_ns = ns;
    }

    pub fn get(&self, cat: Category) -> Counters {
        self.counters[cat.index()]
    }

    pub fn total(&self) -> Counters {
        let mut t = Counters::default();
        for c in &self.counters {
            t.accumulate(c);
        }
        t
    }

    /// Per-category differences against an earlier snapshot of the same ledger.
    pub fn since(&self, earlier: &CommLedger) -> CommLedger {
        let mut out = CommLedger::default();
        for cat in Category::ALL {
            out.counters[cat.index()] = self.get(cat).since(&earlier.get(cat));
        }
        out
    }

    /// Byte-level equality ignoring wall time.
    pub fn same_counts(&self, other: &CommLedger) -> bool {
        Category::ALL.iter().all(|&c| {
            let (a, b) = (self.get(c), other.get(c));
            a.bytes == b.bytes && a.rounds == b.rounds && a.op_count == b.op_count
        })
    }
}

/// Monotonic time source in nanoseconds; the core crate has no clock of its own.
pub trait Clock {
    fn now_ns(&self) -> u64;
}

/// A clock that never advances.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ns(&self) -> u64 {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_are_category_sums() {
        let mut l = CommLedger::new();
        l.charge(Category::Embed, 10, 1);
        l.charge(Category::Linear, 32, 1);
        l.charge(Category::Linear, 8, 2);
        l.add_wall(Category::Softmax, 5);
        let t = l.total();
        assert_eq!(t.bytes, 50);
        assert_eq!(t.rounds, 4);
        assert_eq!(t.op_count, 3);
        assert_eq!(t.wall_ns, 5);
        assert_eq!(l.get(Category::Linear).op_count, 2);
    }

    #[test]
    fn since_subtracts() {
        let mut l = CommLedger::new();
        l.charge(Category::Embed, 10, 1);
        let before = l.clone();
        l.charge(Category::Embed, 6, 1);
        let d = l.since(&before);
        assert_eq!(d.get(Category::Embed).bytes, 6);
        assert_eq!(d.get(Category::Linear), Counters::default());
    }

    #[test]
    fn category_names_round_trip() {
        for c in Category::ALL {
            assert_eq!(Category::parse(c.name()), Some(c));
        }
        assert_eq!(Category::parse("softmax"), Some(Category::Softmax));
        assert_eq!(Category::parse("nope"), None);
    }
}
