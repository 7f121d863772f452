/// Cost counters for a single traced search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Key comparisons performed.
    pub comparisons: u64,
    /// Successor links followed.
    pub link_traversals: u64,
}

impl SearchStats {
    #[inline]
    pub(crate) fn compare(&mut self) {
        self.comparisons += 1;
    }

    #[inline]
    pub(crate) fn traverse(&mut self) {
        self.link_traversals += 1;
    }
}
