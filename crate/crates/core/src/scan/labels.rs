//! Family labels over the grid.
//!
//! The two families swap when carried once around the caustic, so no
//! labelling of the whole plane is continuous: some cut ray from the caustic
//! to the window edge must carry the swap. The serpentine continuation puts
//! that ray wherever the sweep happens to turn. Here the labels are rebuilt
//! by breadth-first continuation over grid neighbours that never crosses a
//! chosen ray, and the ray is chosen so that one family keeps `F0 >= 0` on
//! the whole grid when possible.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::linalg::{max_abs, sub2};
use crate::trajectory::TrajectoryResult;

/// Direction of the cut ray from the caustic cell to the window edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutDirection {
    LowQx,
    HighQx,
    EarlyT,
    LateT,
}

/// Tried in this order; rays along `qx` first.
const DIRECTIONS: [CutDirection; 4] = [
    CutDirection::LowQx,
    CutDirection::HighQx,
    CutDirection::EarlyT,
    CutDirection::LateT,
];

/// Cut ray leaving the cell whose lower corner is `(iq, it)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutRay {
    pub iq: usize,
    pub it: usize,
    pub direction: CutDirection,
}

impl CutRay {
    /// Whether the grid edge `p -> q` (given as `(iq, it)` pairs) crosses the ray.
    pub fn crosses(&self, p: (usize, usize), q: (usize, usize)) -> bool {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let along_t = lo.0 == hi.0;
        match self.direction {
            // edges along T below or above the cell
            CutDirection::LowQx => along_t && lo.1 == self.it && lo.0 <= self.iq,
            CutDirection::HighQx => along_t && lo.1 == self.it && lo.0 > self.iq,
            // edges along qx before or after the cell
            CutDirection::EarlyT => !along_t && lo.0 == self.iq && lo.1 <= self.it,
            CutDirection::LateT => !along_t && lo.0 == self.iq && lo.1 > self.it,
        }
    }
}

/// Final labels: family `f` at point `p` is raw family `f ^ swap[p]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Labelling {
    pub swap: Vec<bool>,
    /// Neighbour each point was reached from.
    pub parent: Vec<Option<usize>>,
    /// Breadth-first visiting order; unreached points are appended last.
    pub order: Vec<usize>,
    pub cut: Option<CutRay>,
    /// Points where the final family `a` has `F0 < -eps` (zero when the
    /// asymmetry could be established).
    pub negative_a: usize,
    pub negative_b: usize,
}

/// Raw per-point families from the continuation on an `n_qx x n_t` grid,
/// stored at `iq * n_t + it`.
pub struct RawGrid<'a> {
    pub n_qx: usize,
    pub n_t: usize,
    pub raw: &'a [[Option<TrajectoryResult>; 2]],
    /// Order of the continuation sweep.
    pub sweep: &'a [usize],
}

impl RawGrid<'_> {
    fn complete(&self, p: usize) -> bool {
        match &self.raw[p] {
            [Some(a), Some(b)] => max_abs(&sub2(&a.v0, &b.v0)) > 1e-8,
            _ => false,
        }
    }

    fn coords(&self, p: usize) -> (usize, usize) {
        (p / self.n_t, p % self.n_t)
    }

    fn neighbours(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        let (iq, it) = self.coords(p);
        let n_t = self.n_t;
        let n_qx = self.n_qx;
        [
            (it > 0).then(|| p - 1),
            (it + 1 < n_t).then(|| p + 1),
            (iq > 0).then(|| p - n_t),
            (iq + 1 < n_qx).then(|| p + n_t),
        ]
        .into_iter()
        .flatten()
    }

    /// Whether the raw labels swap along the edge `p -> q`, or `None` when
    /// either end lacks a family.
    fn edge_swaps(&self, p: usize, q: usize, pos: &[usize]) -> Option<bool> {
        if !self.complete(p) || !self.complete(q) {
            return None;
        }
        // consecutive sweep points are continuous by construction
        if pos[p].abs_diff(pos[q]) == 1 {
            return Some(false);
        }
        let v = |x: usize, f: usize| self.raw[x][f].as_ref().unwrap().v0;
        let same = max_abs(&sub2(&v(p, 0), &v(q, 0))) + max_abs(&sub2(&v(p, 1), &v(q, 1)));
        let cross = max_abs(&sub2(&v(p, 0), &v(q, 1))) + max_abs(&sub2(&v(p, 1), &v(q, 0)));
        Some(cross < same)
    }

    fn sweep_positions(&self) -> Vec<usize> {
        let mut pos = vec![usize::MAX; self.raw.len()];
        for (s, &p) in self.sweep.iter().enumerate() {
            pos[p] = s;
        }
        pos
    }

    /// Cells around which the raw labels come back swapped. The caustic
    /// lies inside such a cell.
    pub fn odd_cells(&self) -> Vec<(usize, usize)> {
        let pos = self.sweep_positions();
        let mut out = Vec::new();
        for iq in 0..self.n_qx.saturating_sub(1) {
            for it in 0..self.n_t.saturating_sub(1) {
                let p = iq * self.n_t + it;
                let ring = [p, p + 1, p + 1 + self.n_t, p + self.n_t, p];
                let mut parity = false;
                let mut known = true;
                for w in ring.windows(2) {
                    match self.edge_swaps(w[0], w[1], &pos) {
                        Some(s) => parity ^= s,
                        None => known = false,
                    }
                }
                if known && parity {
                    out.push((iq, it));
                }
            }
        }
        out
    }

    fn bfs(&self, cut: Option<CutRay>, root: Option<usize>) -> (Vec<bool>, Vec<Option<usize>>, Vec<usize>) {
        let n = self.raw.len();
        let pos = self.sweep_positions();
        let mut swap = vec![false; n];
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let Some(root) = root else {
            return (swap, parent, self.sweep.to_vec());
        };
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(p) = queue.pop_front() {
            order.push(p);
            for q in self.neighbours(p) {
                if seen[q] || cut.is_some_and(|c| c.crosses(self.coords(p), self.coords(q))) {
                    continue;
                }
                let Some(s) = self.edge_swaps(p, q, &pos) else { continue };
                seen[q] = true;
                swap[q] = swap[p] ^ s;
                parent[q] = Some(p);
                queue.push_back(q);
            }
        }
        order.extend(self.sweep.iter().copied().filter(|&p| !seen[p]));
        (swap, parent, order)
    }

    /// Builds the labelling from `f0(p, f)`, the `F0` of raw family `f` at
    /// point `p`; family `a` ends up with the fewest points below `-eps`.
    pub fn label(&self, f0: impl Fn(usize, usize) -> f64, eps: f64) -> Labelling {
        let negative = |p: usize, f: usize| f0(p, f) < -eps;
        let root = self.sweep.iter().copied().find(|&p| self.complete(p));
        let count = |swap: &[bool]| {
            let mut neg = [0usize; 2];
            for p in 0..self.raw.len() {
                for (f, n) in neg.iter_mut().enumerate() {
                    if self.raw[p][f ^ swap[p] as usize].is_some() && negative(p, f ^ swap[p] as usize) {
                        *n += 1;
                    }
                }
            }
            neg
        };
        let cells = self.odd_cells();
        let candidates: Vec<Option<CutRay>> = match cells.first() {
            Some(&(iq, it)) => DIRECTIONS
                .iter()
                .map(|&direction| Some(CutRay { iq, it, direction }))
                .collect(),
            None => vec![None],
        };
        let mut best: Option<Labelling> = None;
        for cut in candidates {
            let (mut swap, parent, order) = self.bfs(cut, root);
            let mut neg = count(&swap);
            if neg[0] > neg[1] {
                swap.iter_mut().for_each(|s| *s = !*s);
                neg.swap(0, 1);
            }
            let cand = Labelling {
                swap,
                parent,
                order,
                cut,
                negative_a: neg[0],
                negative_b: neg[1],
            };
            if cand.negative_a == 0 {
                return cand;
            }
            if best.as_ref().is_none_or(|b| cand.negative_a < b.negative_a) {
                best = Some(cand);
            }
        }
        best.expect("at least one candidate")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_crossings() {
        let down = CutRay {
            iq: 2,
            it: 3,
            direction: CutDirection::LowQx,
        };
        // edge along T in row 1 between it = 3 and 4 lies below the cell
        assert!(down.crosses((1, 3), (1, 4)));
        assert!(down.crosses((2, 4), (2, 3)));
        assert!(!down.crosses((3, 3), (3, 4)));
        assert!(!down.crosses((1, 4), (1, 5)));
        assert!(!down.crosses((1, 3), (2, 3)));
        let up = CutRay {
            direction: CutDirection::HighQx,
            ..down
        };
        assert!(up.crosses((3, 3), (3, 4)));
        assert!(!up.crosses((2, 3), (2, 4)));
        let early = CutRay {
            direction: CutDirection::EarlyT,
            ..down
        };
        assert!(early.crosses((2, 0), (3, 0)));
        assert!(early.crosses((2, 3), (3, 3)));
        assert!(!early.crosses((2, 4), (3, 4)));
        let late = CutRay {
            direction: CutDirection::LateT,
            ..down
        };
        assert!(late.crosses((2, 4), (3, 4)));
        assert!(!late.crosses((2, 3), (3, 3)));
    }
}
