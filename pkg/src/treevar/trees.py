"""Regression-tree engine: structures, penalized tree prior, MH moves, conjugate leaves.

Trees are binary deciders over effect-modifier rows z with the convention
``z[var] <= threshold`` goes left. An Ensemble is a sum of S trees approximating one
scalar function of z; the factor index ``nu`` enters the split-probability prior
``alpha**nu * (1 + depth) ** (-zeta**nu)`` so that higher-indexed factors prefer
simpler trees.

The Metropolis-Hastings moves (GROW/PRUNE/CHANGE/SWAP) target the tree prior
conditioned on structural validity (every leaf cell holds at least ``n_min`` observed
Z rows) times the Gaussian marginal likelihood of a weighted target with the leaf
values integrated out. Invalid proposals are auto-rejected, so the validity
normalizer cancels from every acceptance ratio.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import DimensionError

__all__ = [
    "Node",
    "Tree",
    "Ensemble",
    "WeightedTarget",
    "TreePriorParams",
    "candidate_thresholds",
    "node_split_prob",
    "tree_log_prior",
    "evaluate",
    "evaluate_ensemble",
    "leaf_suff_stats",
    "leaf_marginal_loglik",
    "propose_and_accept",
    "sample_terminal_params",
    "sample_prior_tree",
    "bart_sweep",
]

MOVE_PROBS = (("grow", 0.25), ("prune", 0.25), ("change", 0.40), ("swap", 0.10))


class Node:
    """One tree node. Internal nodes carry (var, threshold); leaves carry mu."""

    __slots__ = ("var", "threshold", "mu", "left", "right")

    def __init__(self, var=None, threshold=None, mu=0.0, left=None, right=None):
        self.var = var
        self.threshold = threshold
        self.mu = mu
        self.left = left
        self.right = right

    @property
    def is_leaf(self) -> bool:
        return self.var is None


class Tree:
    """Binary regression tree over modifier rows."""

    def __init__(self, root: Optional[Node] = None):
        self.root = root if root is not None else Node(mu=0.0)

    # -- structure queries ---------------------------------------------------

    def nodes_with_depth(self) -> List[Tuple[Node, int]]:
        out = []
        stack = [(self.root, 0)]
        while stack:
            node, d = stack.pop()
            out.append((node, d))
            if not node.is_leaf:
                stack.append((node.right, d + 1))
                stack.append((node.left, d + 1))
        return out

    def leaves(self) -> List[Tuple[Node, int]]:
        return [(n, d) for n, d in self.nodes_with_depth() if n.is_leaf]

    def internal(self) -> List[Tuple[Node, int]]:
        return [(n, d) for n, d in self.nodes_with_depth() if not n.is_leaf]

    def prunable(self) -> List[Tuple[Node, int]]:
        """Internal nodes whose children are both leaves."""
        return [
            (n, d)
            for n, d in self.internal()
            if n.left.is_leaf and n.right.is_leaf
        ]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    @property
    def n_internal(self) -> int:
        return len(self.internal())

    @property
    def depth(self) -> int:
        return max(d for _, d in self.nodes_with_depth())

    # -- evaluation ----------------------------------------------------------

    def evaluate_row(self, z) -> float:
        node = self.root
        while not node.is_leaf:
            node = node.left if z[node.var] <= node.threshold else node.right
        return node.mu

    def predict(self, Z: np.ndarray) -> np.ndarray:
        """Vector of leaf values for every row of Z."""
        out = np.empty(Z.shape[0])
        self._fill(self.root, np.ones(Z.shape[0], dtype=bool), Z, out)
        return out

    def _fill(self, node: Node, mask: np.ndarray, Z: np.ndarray, out: np.ndarray):
        if node.is_leaf:
            out[mask] = node.mu
            return
        go_left = Z[:, node.var] <= node.threshold
        self._fill(node.left, mask & go_left, Z, out)
        self._fill(node.right, mask & ~go_left, Z, out)

    def leaf_masks(self, Z: np.ndarray) -> List[Tuple[Node, np.ndarray]]:
        """(leaf, boolean row mask) pairs partitioning the rows of Z."""
        out: List[Tuple[Node, np.ndarray]] = []
        _collect_leaf_masks(self.root, np.ones(Z.shape[0], dtype=bool), Z, out)
        return out

    # -- serialization -------------------------------------------------------

    def to_node_list(self) -> List[dict]:
        """Preorder node list: {id, parent, split_var, threshold} or {id, parent, mu}."""
        records: List[dict] = []

        def rec(node: Node, parent: Optional[int]):
            nid = len(records)
            if node.is_leaf:
                records.append({"id": nid, "parent": parent, "mu": float(node.mu)})
            else:
                records.append(
                    {
                        "id": nid,
                        "parent": parent,
                        "split_var": int(node.var),
                        "threshold": float(node.threshold),
                    }
                )
                rec(node.left, nid)
                rec(node.right, nid)

        rec(self.root, None)
        return records

    @classmethod
    def from_node_list(cls, records: Sequence[dict]) -> "Tree":
        nodes = {}
        children: dict = {}
        for rec in records:
            if "mu" in rec:
                nodes[rec["id"]] = Node(mu=rec["mu"])
            else:
                nodes[rec["id"]] = Node(var=rec["split_var"], threshold=rec["threshold"])
            if rec["parent"] is not None:
                children.setdefault(rec["parent"], []).append(rec["id"])
        for pid, kids in children.items():
            if len(kids) != 2:
                raise DimensionError("internal node must have exactly two children")
            nodes[pid].left = nodes[kids[0]]
            nodes[pid].right = nodes[kids[1]]
        root_id = next(r["id"] for r in records if r["parent"] is None)
        return cls(nodes[root_id])


def _collect_leaf_masks(node, mask, Z, out):
    if node.is_leaf:
        out.append((node, mask))
        return
    go_left = Z[:, node.var] <= node.threshold
    _collect_leaf_masks(node.left, mask & go_left, Z, out)
    _collect_leaf_masks(node.right, mask & ~go_left, Z, out)


@dataclass
class WeightedTarget:
    """Weighted regression target: response u_t with noise variance w_t > 0.

    ``rows`` indexes the retained observations into the full Z row set; rows not
    listed carry zero information (their precision is treated as exactly 0), which
    is how upstream callers exclude infinite-variance observations.
    """

    u: np.ndarray
    w: np.ndarray
    rows: Optional[np.ndarray] = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if self.u.shape != self.w.shape:
            raise DimensionError("u and w must have equal length")
        if np.any(~np.isfinite(self.w)) or np.any(self.w <= 0):
            raise DimensionError("all noise variances w must be finite and positive")
        if self.rows is not None:
            self.rows = np.asarray(self.rows, dtype=int)
            if self.rows.shape != self.u.shape:
                raise DimensionError("rows must align with u")

    def precision_arrays(self, T: int) -> Tuple[np.ndarray, np.ndarray]:
        """Full-length (1/w, u/w) arrays with zeros at excluded rows."""
        rows = np.arange(T) if self.rows is None else self.rows
        if len(self.u) != len(rows):
            raise DimensionError("target length must match its row index set")
        winv = np.zeros(T)
        uw = np.zeros(T)
        winv[rows] = 1.0 / self.w
        uw[rows] = self.u / self.w
        return winv, uw


@dataclass
class TreePriorParams:
    """Prior and proposal-menu parameters shared by the MH moves.

    ``thresholds[j]`` is the candidate-threshold array for modifier j: the distinct
    observed values of Z[:, j] except the maximum (a ``<=`` split at the maximum
    would leave an empty right cell).
    """

    nu: int
    alpha: float
    zeta: float
    prior_var: float
    n_min: int
    thresholds: List[np.ndarray]

    @property
    def n_vars(self) -> int:
        return len(self.thresholds)


def candidate_thresholds(Z: np.ndarray) -> List[np.ndarray]:
    """Per-variable candidate splits: distinct observed values minus each maximum."""
    return [np.unique(Z[:, j])[:-1] for j in range(Z.shape[1])]


def node_split_prob(depth: int, nu: int, alpha: float, zeta: float) -> float:
    """Prior probability that a node at ``depth`` is internal: alpha^nu (1+depth)^(-zeta^nu)."""
    return float(alpha**nu * (1.0 + depth) ** (-(zeta**nu)))


def tree_log_prior(
    tree: Tree, nu: int, alpha: float, zeta: float, n_candidates: Sequence[int]
) -> float:
    """Log prior probability of a tree's structure and rules.

    Sum over internal nodes of log split-probability plus the uniform rule prior
    -log(N) - log(#candidates of the split variable), plus the sum over leaves of
    log(1 - split-probability).
    """
    N = len(n_candidates)
    total = 0.0
    for node, d in tree.nodes_with_depth():
        p = node_split_prob(d, nu, alpha, zeta)
        if node.is_leaf:
            total += math.log1p(-p) if p < 1.0 else -math.inf
        else:
            n_cand = n_candidates[node.var]
            if p <= 0.0 or n_cand == 0:
                return -math.inf
            total += math.log(p) - math.log(N) - math.log(n_cand)
    return total


def evaluate(tree: Tree, z) -> float:
    """Terminal parameter of the unique leaf whose rules z satisfies (<= goes left)."""
    return tree.evaluate_row(np.asarray(z, dtype=float))


def evaluate_ensemble(ensemble: "Ensemble", z) -> float:
    """Sum of evaluate over all trees in the ensemble."""
    zz = np.asarray(z, dtype=float)
    return float(sum(t.evaluate_row(zz) for t in ensemble.trees))


def leaf_suff_stats(
    tree: Tree, target: WeightedTarget, Z: np.ndarray
) -> List[Tuple[float, float]]:
    """Per-leaf (sum of 1/w, sum of u/w) over the observations routed to each leaf."""
    winv, uw = target.precision_arrays(Z.shape[0])
    return [
        (float(winv[mask].sum()), float(uw[mask].sum()))
        for _, mask in tree.leaf_masks(Z)
    ]


def leaf_marginal_loglik(suff_stats: Tuple[float, float], prior_var: float) -> float:
    """Leaf marginal log-likelihood with mu ~ N(0, prior_var) integrated out.

    Up to the data-only constant shared across tree structures:
    0.5*log(pv^-1 / (pv^-1 + P)) + 0.5*S^2 / (pv^-1 + P) with P = sum 1/w, S = sum u/w.
    """
    P, S = suff_stats
    pv_inv = 1.0 / prior_var
    prec = pv_inv + P
    return 0.5 * math.log(pv_inv / prec) + 0.5 * S * S / prec


class Ensemble:
    """A sum of S trees with shared prior parameters and cached training fits."""

    def __init__(self, trees: List[Tree], nu: int, prior_var: float):
        if len(trees) < 1:
            raise DimensionError("ensemble needs at least one tree")
        if prior_var <= 0:
            raise DimensionError("prior_var must be positive")
        self.trees = trees
        self.nu = nu
        self.prior_var = prior_var
        self.fits: Optional[np.ndarray] = None  # (S, T) cache over training Z

    @property
    def S(self) -> int:
        return len(self.trees)

    @classmethod
    def root_only(cls, S: int, nu: int, prior_var: float) -> "Ensemble":
        return cls([Tree() for _ in range(S)], nu=nu, prior_var=prior_var)

    def refresh_fits(self, Z: np.ndarray):
        self.fits = np.vstack([t.predict(Z) for t in self.trees])

    def fit_total(self) -> np.ndarray:
        if self.fits is None:
            raise DimensionError("fits cache not initialized; call refresh_fits")
        return self.fits.sum(axis=0)

    def to_json_obj(self) -> dict:
        return {
            "nu": int(self.nu),
            "prior_var": float(self.prior_var),
            "trees": [t.to_node_list() for t in self.trees],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Ensemble":
        return cls(
            [Tree.from_node_list(rec) for rec in obj["trees"]],
            nu=obj["nu"],
            prior_var=obj["prior_var"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json(cls, s: str) -> "Ensemble":
        return cls.from_json_obj(json.loads(s))


# ---------------------------------------------------------------------------
# Metropolis-Hastings moves
# ---------------------------------------------------------------------------


def _subtree_scan(node, mask, Z, winv, uw, prior_var):
    """(sum of leaf marginal logliks, min leaf count) for the subtree at ``node``."""
    if node.is_leaf:
        stats = (float(winv[mask].sum()), float(uw[mask].sum()))
        return leaf_marginal_loglik(stats, prior_var), int(mask.sum())
    go_left = Z[:, node.var] <= node.threshold
    ll_l, n_l = _subtree_scan(node.left, mask & go_left, Z, winv, uw, prior_var)
    ll_r, n_r = _subtree_scan(node.right, mask & ~go_left, Z, winv, uw, prior_var)
    return ll_l + ll_r, min(n_l, n_r)


def _node_mask(root: Node, target_node: Node, Z: np.ndarray) -> Optional[np.ndarray]:
    """Boolean row mask of observations reaching ``target_node``."""
    stack = [(root, np.ones(Z.shape[0], dtype=bool))]
    while stack:
        node, mask = stack.pop()
        if node is target_node:
            return mask
        if not node.is_leaf:
            go_left = Z[:, node.var] <= node.threshold
            stack.append((node.left, mask & go_left))
            stack.append((node.right, mask & ~go_left))
    return None


def propose_and_accept(
    tree: Tree,
    target: WeightedTarget,
    Z: np.ndarray,
    prior: TreePriorParams,
    rng: np.random.Generator,
) -> bool:
    """One MH step on the tree structure; mutates ``tree`` in place.

    Acceptance ratio = marginal-likelihood ratio x tree-prior ratio x proposal
    ratio. Proposals violating the n_min leaf-cell constraint (or structurally
    impossible moves, e.g. prune on a root-only tree) count as rejected steps.

    Returns
    -------
    bool
        Whether the proposal was accepted.
    """
    T = Z.shape[0]
    winv, uw = target.precision_arrays(T)
    pv = prior.prior_var
    u01 = rng.random()
    move = "swap"
    acc = 0.0
    for name, p in MOVE_PROBS:
        acc += p
        if u01 < acc:
            move = name
            break

    if move == "grow":
        leaves = tree.leaves()
        leaf, depth = leaves[rng.integers(len(leaves))]
        j = int(rng.integers(prior.n_vars))
        cands = prior.thresholds[j]
        if len(cands) == 0:
            return False
        c = float(cands[rng.integers(len(cands))])
        cell = _node_mask(tree.root, leaf, Z)
        go_left = cell & (Z[:, j] <= c)
        go_right = cell & ~(Z[:, j] <= c)
        n_l, n_r = int(go_left.sum()), int(go_right.sum())
        if n_l < prior.n_min or n_r < prior.n_min:
            return False
        old_ll = leaf_marginal_loglik(
            (float(winv[cell].sum()), float(uw[cell].sum())), pv
        )
        new_ll = leaf_marginal_loglik(
            (float(winv[go_left].sum()), float(uw[go_left].sum())), pv
        ) + leaf_marginal_loglik(
            (float(winv[go_right].sum()), float(uw[go_right].sum())), pv
        )
        p_d = node_split_prob(depth, prior.nu, prior.alpha, prior.zeta)
        p_d1 = node_split_prob(depth + 1, prior.nu, prior.alpha, prior.zeta)
        if p_d <= 0.0:
            return False
        d_prior = (
            math.log(p_d)
            + 2.0 * math.log1p(-p_d1)
            - math.log1p(-p_d)
            - math.log(prior.n_vars)
            - math.log(len(cands))
        )
        # forward: pick this leaf, variable, threshold; reverse: pick the new
        # internal node among prunable nodes of the proposal
        old_mu = leaf.mu
        leaf.var, leaf.threshold = j, c
        leaf.left = Node(mu=old_mu)
        leaf.right = Node(mu=old_mu)
        n_prunable_new = len(tree.prunable())
        d_prop = (
            -math.log(n_prunable_new)
            + math.log(len(leaves))
            + math.log(prior.n_vars)
            + math.log(len(cands))
        )
        log_alpha = (new_ll - old_ll) + d_prior + d_prop
        if rng.random() < math.exp(min(0.0, log_alpha)):
            return True
        leaf.var = None
        leaf.threshold = None
        leaf.left = None
        leaf.right = None
        leaf.mu = old_mu
        return False

    if move == "prune":
        prunable = tree.prunable()
        if not prunable:
            return False
        node, depth = prunable[rng.integers(len(prunable))]
        cell = _node_mask(tree.root, node, Z)
        go_left = cell & (Z[:, node.var] <= node.threshold)
        go_right = cell & ~(Z[:, node.var] <= node.threshold)
        old_ll = leaf_marginal_loglik(
            (float(winv[go_left].sum()), float(uw[go_left].sum())), pv
        ) + leaf_marginal_loglik(
            (float(winv[go_right].sum()), float(uw[go_right].sum())), pv
        )
        new_ll = leaf_marginal_loglik(
            (float(winv[cell].sum()), float(uw[cell].sum())), pv
        )
        p_d = node_split_prob(depth, prior.nu, prior.alpha, prior.zeta)
        p_d1 = node_split_prob(depth + 1, prior.nu, prior.alpha, prior.zeta)
        n_cand = len(prior.thresholds[node.var])
        d_prior = (
            math.log1p(-p_d)
            - math.log(p_d)
            - 2.0 * math.log1p(-p_d1)
            + math.log(prior.n_vars)
            + math.log(n_cand)
        )
        n_leaves_new = tree.n_leaves - 1
        d_prop = (
            -math.log(n_leaves_new)
            - math.log(prior.n_vars)
            - math.log(n_cand)
            + math.log(len(prunable))
        )
        log_alpha = (new_ll - old_ll) + d_prior + d_prop
        if rng.random() < math.exp(min(0.0, log_alpha)):
            saved_mu = 0.5 * (node.left.mu + node.right.mu)
            node.var = None
            node.threshold = None
            node.left = None
            node.right = None
            node.mu = saved_mu
            return True
        return False

    if move == "change":
        internal = tree.internal()
        if not internal:
            return False
        node, _ = internal[rng.integers(len(internal))]
        j_new = int(rng.integers(prior.n_vars))
        cands = prior.thresholds[j_new]
        if len(cands) == 0:
            return False
        c_new = float(cands[rng.integers(len(cands))])
        cell = _node_mask(tree.root, node, Z)
        old_ll, old_min = _subtree_scan(node, cell, Z, winv, uw, pv)
        j_old, c_old = node.var, node.threshold
        node.var, node.threshold = j_new, c_new
        new_ll, new_min = _subtree_scan(node, cell, Z, winv, uw, pv)
        if new_min < prior.n_min:
            node.var, node.threshold = j_old, c_old
            return False
        # threshold-prior and proposal contributions cancel exactly; written out
        # for transparency
        d_prior = math.log(len(prior.thresholds[j_old])) - math.log(len(cands))
        d_prop = math.log(len(cands)) - math.log(len(prior.thresholds[j_old]))
        log_alpha = (new_ll - old_ll) + d_prior + d_prop
        if rng.random() < math.exp(min(0.0, log_alpha)):
            return True
        node.var, node.threshold = j_old, c_old
        return False

    # swap: exchange rules between an internal parent and an internal child
    pairs = []
    for node, _ in tree.internal():
        if not node.left.is_leaf:
            pairs.append((node, node.left))
        if not node.right.is_leaf:
            pairs.append((node, node.right))
    if not pairs:
        return False
    parent, child = pairs[rng.integers(len(pairs))]
    cell = _node_mask(tree.root, parent, Z)
    old_ll, _ = _subtree_scan(parent, cell, Z, winv, uw, pv)
    parent.var, child.var = child.var, parent.var
    parent.threshold, child.threshold = child.threshold, parent.threshold
    new_ll, new_min = _subtree_scan(parent, cell, Z, winv, uw, pv)
    if new_min >= prior.n_min and rng.random() < math.exp(min(0.0, new_ll - old_ll)):
        return True
    parent.var, child.var = child.var, parent.var
    parent.threshold, child.threshold = child.threshold, parent.threshold
    return False


def sample_terminal_params(
    tree: Tree,
    target: WeightedTarget,
    Z: np.ndarray,
    prior_var: float,
    rng: np.random.Generator,
) -> Tree:
    """Redraw every leaf value from its conjugate Gaussian posterior.

    Each leaf gets mu ~ N(S/(pv^-1 + P), 1/(pv^-1 + P)) with (P, S) the leaf's
    weighted sufficient statistics; a leaf with no retained observations draws
    from the N(0, prior_var) prior.
    """
    winv, uw = target.precision_arrays(Z.shape[0])
    pv_inv = 1.0 / prior_var
    for leaf, mask in tree.leaf_masks(Z):
        prec = pv_inv + winv[mask].sum()
        mean = uw[mask].sum() / prec
        leaf.mu = mean + math.sqrt(1.0 / prec) * rng.standard_normal()
    return tree


def sample_prior_tree(
    Z: np.ndarray,
    prior: TreePriorParams,
    rng: np.random.Generator,
    max_tries: int = 1000,
) -> Tree:
    """Draw a tree structure from the generative prior conditioned on validity.

    Rejection sampling: grow from the root (split with node_split_prob, uniform
    variable, uniform threshold over the full candidate set) and resample the whole
    tree until every leaf cell holds >= n_min rows of Z. Leaf values are left at 0;
    draw them with sample_terminal_params (an empty target gives prior draws).
    """
    N = prior.n_vars
    counts = np.array([len(c) for c in prior.thresholds])
    if np.all(counts == 0):
        return Tree()

    def grow(depth: int) -> Optional[Node]:
        if depth > 50:
            return None
        if rng.random() >= node_split_prob(depth, prior.nu, prior.alpha, prior.zeta):
            return Node(mu=0.0)
        j = int(rng.integers(N))
        cands = prior.thresholds[j]
        if len(cands) == 0:
            return None  # invalid attempt: rule has no candidate thresholds
        c = float(cands[rng.integers(len(cands))])
        left = grow(depth + 1)
        right = grow(depth + 1)
        if left is None or right is None:
            return None
        return Node(var=j, threshold=c, left=left, right=right)

    for _ in range(max_tries):
        root = grow(0)
        if root is None:
            continue
        tree = Tree(root)
        if all(int(m.sum()) >= prior.n_min for _, m in tree.leaf_masks(Z)):
            return tree
    return Tree()


def sample_prior_ensemble(
    S: int,
    Z: np.ndarray,
    prior: TreePriorParams,
    rng: np.random.Generator,
) -> Ensemble:
    """Draw a whole ensemble (structures and leaf values) from the prior.

    Structures come from sample_prior_tree; every leaf value is an independent
    N(0, prior.prior_var) draw. The fits cache is left refreshed against Z.
    """
    trees = []
    for _ in range(S):
        tree = sample_prior_tree(Z, prior, rng)
        for leaf, _ in tree.leaves():
            leaf.mu = rng.normal(0.0, math.sqrt(prior.prior_var))
        trees.append(tree)
    ensemble = Ensemble(trees, nu=prior.nu, prior_var=prior.prior_var)
    ensemble.refresh_fits(Z)
    return ensemble


def bart_sweep(
    ensemble: Ensemble,
    target: WeightedTarget,
    Z: np.ndarray,
    rng: np.random.Generator,
    prior: TreePriorParams,
) -> Tuple[int, int]:
    """One Bayesian-backfitting sweep over all trees of the ensemble.

    For each tree s, forms the residual target (u minus the fits of all other
    trees), runs one MH structure step and a conjugate leaf redraw, and refreshes
    the cached fit row. The ensemble models the sum of its trees.

    Returns
    -------
    (accepted, proposed) : tuple of int
        MH acceptance counts for diagnostics.
    """
    T = Z.shape[0]
    if ensemble.fits is None or ensemble.fits.shape[1] != T:
        ensemble.refresh_fits(Z)
    total = ensemble.fits.sum(axis=0)
    rows = np.arange(T) if target.rows is None else target.rows
    accepted = 0
    for s, tree in enumerate(ensemble.trees):
        other = total - ensemble.fits[s]
        resid = WeightedTarget(u=target.u - other[rows], w=target.w, rows=target.rows)
        accepted += int(propose_and_accept(tree, resid, Z, prior, rng))
        sample_terminal_params(tree, resid, Z, ensemble.prior_var, rng)
        new_fit = tree.predict(Z)
        total += new_fit - ensemble.fits[s]
        ensemble.fits[s] = new_fit
    return accepted, ensemble.S
