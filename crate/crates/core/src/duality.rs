//! Correspondence between deterministic 1-2-3 skiplists and 2-3-4 trees.
//!
//! A node of height `h` in a list of height `H` is a key of a tree node at
//! depth `H - h`; the gaps below it become that tree node's children. The
//! gap invariant (1 to 3 members per gap) is exactly the 2-3-4 fan-out
//! rule, and equal-height leaves follow from every gap bottoming out at
//! level 0.

use crate::deterministic::DetSkiplist;
use crate::key::{Key, Value};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub entries: Vec<(Key, Value)>,
    /// Empty for leaves, otherwise `entries.len() + 1` subtrees.
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TwoThreeFourTree {
    pub root: Option<TreeNode>,
}

impl TwoThreeFourTree {
    pub fn len(&self) -> usize {
        fn count(node: &TreeNode) -> usize {
            node.entries.len() + node.children.iter().map(count).sum::<usize>()
        }
        self.root.as_ref().map_or(0, count)
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    /// Number of node levels, 0 for the empty tree.
    pub fn depth(&self) -> usize {
        let mut depth = 0;
        let mut node = self.root.as_ref();
        while let Some(n) = node {
            depth += 1;
            node = n.children.first();
        }
        depth
    }

    /// Checks fan-out, key order and uniform leaf depth.
    pub fn validate(&self) -> Result<()> {
        fn walk<'a>(
            node: &'a TreeNode,
            depth: usize,
            leaf_depth: &mut Option<usize>,
            last: &mut Option<&'a Key>,
        ) -> Result<()> {
            if !(1..=3).contains(&node.entries.len()) {
                return Err(Error::InvalidInput(format!(
                    "tree node with {} keys at depth {depth}",
                    node.entries.len()
                )));
            }
            if !node.is_leaf() && node.children.len() != node.entries.len() + 1 {
                return Err(Error::InvalidInput(format!(
                    "tree node with {} keys has {} children",
                    node.entries.len(),
                    node.children.len()
                )));
            }
            if node.is_leaf() {
                match *leaf_depth {
                    Some(d) if d != depth => {
                        return Err(Error::InvalidInput(format!(
                            "leaves at depths {d} and {depth}"
                        )))
                    }
                    _ => *leaf_depth = Some(depth),
                }
            }
            for (i, (key, _)) in node.entries.iter().enumerate() {
                if let Some(child) = node.children.get(i) {
                    walk(child, depth + 1, leaf_depth, last)?;
                }
                if last.is_some_and(|prev| prev >= key) {
                    return Err(Error::InvalidInput(format!("tree key {key:?} out of order")));
                }
                *last = Some(key);
            }
            if let Some(child) = node.children.last().filter(|_| !node.is_leaf()) {
                walk(child, depth + 1, leaf_depth, last)?;
            }
            Ok(())
        }
        match &self.root {
            Some(root) => walk(root, 0, &mut None, &mut None),
            None => Ok(()),
        }
    }

    /// In-order entries.
    pub fn entries(&self) -> Vec<(Key, Value)> {
        let mut out = Vec::with_capacity(self.len());
        self.visit(|_, key, value| out.push((key.clone(), value.clone())));
        out
    }

    fn visit<'a>(&'a self, mut f: impl FnMut(usize, &'a Key, &'a Value)) {
        fn walk<'a>(node: &'a TreeNode, depth: usize, f: &mut impl FnMut(usize, &'a Key, &'a Value)) {
            for (i, (key, value)) in node.entries.iter().enumerate() {
                if let Some(child) = node.children.get(i) {
                    walk(child, depth + 1, f);
                }
                f(depth, key, value);
            }
            if !node.is_leaf() {
                walk(node.children.last().expect("internal node"), depth + 1, f);
            }
        }
        if let Some(root) = &self.root {
            walk(root, 0, &mut f);
        }
    }
}

/// Converts a valid deterministic skiplist into its 2-3-4 tree.
pub fn to_tree(list: &DetSkiplist) -> Result<TwoThreeFourTree> {
    let report = list.check_invariants();
    if let Some(v) = report.violations.first() {
        return Err(Error::InvalidInput(format!("source list is invalid: {v}")));
    }
    if list.is_empty() {
        return Ok(TwoThreeFourTree::default());
    }
    let towers: Vec<(&Key, &Value, usize)> = list.towers().collect();
    Ok(TwoThreeFourTree {
        root: Some(build(&towers, list.height())),
    })
}

/// Builds the tree node holding the height-`h` members of `span`, whose
/// members are all at most `h` tall.
fn build(span: &[(&Key, &Value, usize)], h: usize) -> TreeNode {
    let mut node = TreeNode {
        entries: Vec::new(),
        children: Vec::new(),
    };
    let mut start = 0;
    for (i, &(key, value, height)) in span.iter().enumerate() {
        if height == h {
            if h > 1 {
                node.children.push(build(&span[start..i], h - 1));
            }
            node.entries.push((key.clone(), value.clone()));
            start = i + 1;
        }
    }
    if h > 1 {
        node.children.push(build(&span[start..], h - 1));
    }
    node
}

/// Converts a valid 2-3-4 tree into its deterministic skiplist.
pub fn from_tree(tree: &TwoThreeFourTree) -> Result<DetSkiplist> {
    tree.validate()?;
    let depth = tree.depth();
    let mut towers = Vec::with_capacity(tree.len());
    tree.visit(|d, key, value| towers.push((key.clone(), value.clone(), depth - d)));
    DetSkiplist::from_towers(towers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key::encode_u64;

    fn leaf(keys: &[u64]) -> TreeNode {
        TreeNode {
            entries: keys.iter().map(|&k| (encode_u64(k), Vec::new())).collect(),
            children: Vec::new(),
        }
    }

    #[test]
    fn empty_round_trip() {
        let tree = to_tree(&DetSkiplist::new()).unwrap();
        assert!(tree.is_empty());
        assert!(from_tree(&tree).unwrap().is_empty());
    }

    #[test]
    fn hand_built_tree() {
        let tree = TwoThreeFourTree {
            root: Some(TreeNode {
                entries: vec![(encode_u64(3), Vec::new())],
                children: vec![leaf(&[1, 2]), leaf(&[4, 5, 6])],
            }),
        };
        let list = from_tree(&tree).unwrap();
        let heights: Vec<usize> = list.towers().map(|t| t.2).collect();
        assert_eq!(heights, vec![1, 1, 2, 1, 1, 1]);
        assert!(list.check_invariants().ok());
        assert_eq!(to_tree(&list).unwrap(), tree);
    }

    #[test]
    fn rejects_uneven_leaves() {
        let tree = TwoThreeFourTree {
            root: Some(TreeNode {
                entries: vec![(encode_u64(3), Vec::new())],
                children: vec![
                    leaf(&[1]),
                    TreeNode {
                        entries: vec![(encode_u64(5), Vec::new())],
                        children: vec![leaf(&[4]), leaf(&[6])],
                    },
                ],
            }),
        };
        assert!(matches!(from_tree(&tree), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_overfull_node() {
        let tree = TwoThreeFourTree {
            root: Some(leaf(&[1, 2, 3, 4])),
        };
        assert!(matches!(tree.validate(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_invalid_list() {
        let towers = (1..=4).map(|k| (encode_u64(k), Vec::new(), 1)).collect::<Vec<_>>();
        let list = DetSkiplist::from_towers(towers).unwrap();
        assert!(matches!(to_tree(&list), Err(Error::InvalidInput(_))));
    }
}
