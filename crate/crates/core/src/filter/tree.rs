//! Ancestor tree with online pruning of childless particles.
//!
//! Every generation is appended with parent links into the previous one.
//! A particle that ends up with no children is removed, and the removal
//! cascades up its ancestor branch. What remains at the end are exactly the
//! ancestors of the final particles, and each epoch's estimate is the
//! weighted mean of its survivors.

use crate::error::{Error, Result};
use crate::geometry::{mean_heading, Pose2D};

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub pose: Pose2D,
    pub weight: f64,
    parent: u32,
    children: u32,
    alive: bool,
}

impl Node {
    pub fn new(pose: Pose2D, weight: f64, parent: Option<u32>) -> Self {
        Self {
            pose,
            weight,
            parent: parent.unwrap_or(NO_PARENT),
            children: 0,
            alive: true,
        }
    }

    pub fn parent(&self) -> Option<u32> {
        (self.parent != NO_PARENT).then_some(self.parent)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AncestorTree {
    epochs: Vec<Vec<Node>>,
    alive: Vec<usize>,
}

impl AncestorTree {
    pub fn new(initial: Vec<Node>) -> Self {
        let mut tree = Self::default();
        tree.alive.push(initial.len());
        tree.epochs.push(initial);
        tree
    }

    /// Build a full tree without pruning anything yet.
    pub fn from_epochs(epochs: Vec<Vec<Node>>) -> Result<Self> {
        let mut iter = epochs.into_iter();
        let Some(first) = iter.next() else {
            return Err(Error::Invalid("empty ancestor tree".into()));
        };
        let mut tree = Self::new(first);
        for generation in iter {
            tree.attach(generation)?;
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn epoch(&self, e: usize) -> &[Node] {
        &self.epochs[e]
    }

    pub fn survivors(&self, e: usize) -> impl Iterator<Item = &Node> + Clone {
        self.epochs[e].iter().filter(|n| n.alive)
    }

    pub fn survivor_count(&self, e: usize) -> usize {
        self.alive[e]
    }

    /// Total stored nodes, dead or alive.
    pub fn stored_nodes(&self) -> usize {
        self.epochs.iter().map(Vec::len).sum()
    }

    fn attach(&mut self, generation: Vec<Node>) -> Result<()> {
        let prev = self.epochs.len() - 1;
        for n in &generation {
            let parent = self.epochs[prev]
                .get_mut(n.parent as usize)
                .filter(|p| p.alive)
                .ok_or_else(|| Error::Invalid(format!("bad parent link {}", n.parent)))?;
            parent.children += 1;
        }
        self.alive.push(generation.len());
        self.epochs.push(generation);
        Ok(())
    }

    /// Append a generation and prune every particle of the previous epoch
    /// that was not resampled.
    pub fn push_generation(&mut self, generation: Vec<Node>) -> Result<()> {
        self.attach(generation)?;
        let prev = self.epochs.len() - 2;
        let mut touched = Vec::new();
        for i in 0..self.epochs[prev].len() {
            let n = &self.epochs[prev][i];
            if n.alive && n.children == 0 {
                self.kill(prev, i, &mut touched);
            }
        }
        touched.push(prev);
        touched.sort_unstable();
        touched.dedup();
        for e in touched {
            self.maybe_compact(e);
        }
        Ok(())
    }

    fn kill(&mut self, mut e: usize, mut i: usize, touched: &mut Vec<usize>) {
        loop {
            let node = &mut self.epochs[e][i];
            debug_assert!(node.alive);
            node.alive = false;
            self.alive[e] -= 1;
            let parent = node.parent;
            if e == 0 || parent == NO_PARENT {
                return;
            }
            touched.push(e - 1);
            let p = &mut self.epochs[e - 1][parent as usize];
            p.children -= 1;
            if p.children > 0 || !p.alive {
                return;
            }
            e -= 1;
            i = parent as usize;
        }
    }

    /// Drop dead nodes from epoch `e` once they dominate its storage and
    /// rewrite the parent links of epoch `e + 1`.
    fn maybe_compact(&mut self, e: usize) {
        let len = self.epochs[e].len();
        if len < 64 || self.alive[e] * 2 > len || e + 1 >= self.epochs.len() {
            return;
        }
        let mut remap = vec![NO_PARENT; len];
        let mut kept = Vec::with_capacity(self.alive[e]);
        for (i, n) in self.epochs[e].iter().enumerate() {
            if n.alive {
                remap[i] = kept.len() as u32;
                kept.push(*n);
            }
        }
        self.epochs[e] = kept;
        for child in &mut self.epochs[e + 1] {
            child.parent = if child.alive {
                remap[child.parent as usize]
            } else {
                NO_PARENT
            };
        }
    }

    /// Prune zero-weight leaves of the final epoch (and their now childless
    /// ancestors).
    pub fn prune_final(&mut self) {
        let last = self.epochs.len() - 1;
        let mut touched = Vec::new();
        for i in 0..self.epochs[last].len() {
            let n = &self.epochs[last][i];
            if n.alive && !(n.weight > 0.0) {
                self.kill(last, i, &mut touched);
            }
        }
    }

    /// Ancestor chain of final-epoch particle `leaf`, oldest first.
    pub fn lineage(&self, leaf: usize) -> Vec<Pose2D> {
        let mut out = Vec::with_capacity(self.epochs.len());
        let mut i = leaf;
        for e in (0..self.epochs.len()).rev() {
            let n = &self.epochs[e][i];
            out.push(n.pose);
            i = n.parent as usize;
        }
        out.reverse();
        out
    }

    /// Index of the highest-weight surviving final particle (lowest index on
    /// ties).
    pub fn best_leaf(&self) -> Option<usize> {
        let last = self.epochs.last()?;
        let mut best: Option<(usize, f64)> = None;
        for (i, n) in last.iter().enumerate().filter(|(_, n)| n.alive) {
            if best.is_none_or(|(_, w)| n.weight > w) {
                best = Some((i, n.weight));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Weighted mean pose of a particle set (unit-vector heading average).
/// Falls back to the unweighted mean when all weights are zero.
pub fn weighted_mean<'a>(nodes: impl Iterator<Item = &'a Node> + Clone) -> Option<Pose2D> {
    let total: f64 = nodes.clone().map(|n| n.weight).sum();
    let uniform = !(total > 0.0);
    let weight = |n: &Node| if uniform { 1.0 } else { n.weight };
    let norm: f64 = nodes.clone().map(weight).sum();
    if norm == 0.0 {
        return None;
    }
    let (mut x, mut y) = (0.0, 0.0);
    for n in nodes.clone() {
        let w = weight(n) / norm;
        x += w * n.pose.x;
        y += w * n.pose.y;
    }
    let theta = mean_heading(nodes.map(|n| (n.pose.theta, weight(n)))).unwrap_or(0.0);
    Some(Pose2D::new(x, y, theta))
}

/// Particle-pruning smoother: remove zero-weight leaves and every ancestor
/// left without children, then average the survivors of each epoch.
pub fn prune_smooth(tree: &mut AncestorTree) -> Result<Vec<Pose2D>> {
    if tree.is_empty() {
        return Err(Error::Invalid("empty ancestor tree".into()));
    }
    tree.prune_final();
    // a full tree built by `from_epochs` may still hold childless interior nodes
    for e in (0..tree.len() - 1).rev() {
        let mut touched = Vec::new();
        for i in 0..tree.epochs[e].len() {
            let n = &tree.epochs[e][i];
            if n.alive && n.children == 0 {
                tree.kill(e, i, &mut touched);
            }
        }
    }
    (0..tree.len())
        .map(|e| {
            weighted_mean(tree.survivors(e))
                .ok_or_else(|| Error::Invalid(format!("no surviving particles at epoch {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn node(x: f64, w: f64, parent: Option<u32>) -> Node {
        Node::new(Pose2D::new(x, 0.0, 0.0), w, parent)
    }

    #[test]
    fn single_lineage() {
        let mut tree = AncestorTree::from_epochs(vec![
            vec![node(0.0, 1.0, None)],
            vec![node(1.0, 1.0, Some(0))],
            vec![node(2.0, 1.0, Some(0))],
        ])
        .unwrap();
        let traj = prune_smooth(&mut tree).unwrap();
        let xs: Vec<f64> = traj.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn midpoint_of_two_lineages() {
        let mut tree = AncestorTree::from_epochs(vec![
            vec![
                node(0.0, 0.5, None),
                node(2.0, 0.5, None),
                node(9.0, 0.5, None),
            ],
            vec![node(0.0, 0.5, Some(0)), node(2.0, 0.5, Some(1))],
        ])
        .unwrap();
        let traj = prune_smooth(&mut tree).unwrap();
        assert_abs_diff_eq!(traj[0].x, 1.0);
        assert_abs_diff_eq!(traj[1].x, 1.0);
        assert_eq!(tree.survivor_count(0), 2);
    }

    #[test]
    fn zero_weight_leaf_prunes_branch() {
        let mut tree = AncestorTree::from_epochs(vec![
            vec![node(0.0, 0.5, None), node(4.0, 0.5, None)],
            vec![node(0.0, 1.0, Some(0)), node(4.0, 0.0, Some(1))],
        ])
        .unwrap();
        let traj = prune_smooth(&mut tree).unwrap();
        assert_abs_diff_eq!(traj[0].x, 0.0);
        assert_eq!(tree.best_leaf(), Some(0));
        assert_eq!(tree.lineage(0).len(), 2);
    }

    #[test]
    fn online_pruning_compacts() {
        let first: Vec<Node> = (0..200).map(|i| node(i as f64, 1.0, None)).collect();
        let mut tree = AncestorTree::new(first);
        // everyone descends from particle 7
        let gen: Vec<Node> = (0..200).map(|_| node(7.0, 1.0, Some(7))).collect();
        tree.push_generation(gen).unwrap();
        assert_eq!(tree.survivor_count(0), 1);
        assert_eq!(tree.epoch(0).len(), 1);
        let gen: Vec<Node> = (0..200).map(|i| node(7.0, 1.0, Some(i % 3))).collect();
        tree.push_generation(gen).unwrap();
        assert_eq!(tree.epoch(1).len(), 3);
        let traj = prune_smooth(&mut tree).unwrap();
        assert_abs_diff_eq!(traj[0].x, 7.0);
    }

    #[test]
    fn rejects_bad_parent() {
        let err = AncestorTree::from_epochs(vec![
            vec![node(0.0, 1.0, None)],
            vec![node(1.0, 1.0, Some(3))],
        ]);
        assert!(err.is_err());
    }
}
