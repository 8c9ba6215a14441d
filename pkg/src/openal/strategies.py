"""Query strategies: OpenAL (FTSS then MISS), its ablations, and baselines."""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, ftss
from .probe import entropy, predict_proba

STRATEGIES = ("openal", "random", "uncertainty", "certainty", "coreset")


@dataclass(frozen=True)
class OpenALFlags:
    disable_sw: bool = False
    disable_st: bool = False
    disable_miss: bool = False
    only_miss: bool = False
    candidate_multiplier: int = 2
    W: int = 9

    def label(self):
        parts = [n for n in ("disable_sw", "disable_st", "disable_miss", "only_miss") if getattr(self, n)]
        return "openal" + "".join("+" + p for p in parts)


@dataclass
class QuerySelection:
    round: int
    ids: np.ndarray
    strategy: str
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.ids)


def _top_entropy(ids, H, k, highest=True):
    ids = np.asarray(ids)
    order = np.lexsort((ids, -H if highest else H))
    return ids[order[:k]]


def miss_select(ids, features, model, budget, round=0):
    """Keep the ``budget`` candidates with the highest predictive entropy."""
    ids = np.asarray(ids)
    if len(ids) == 0:
        raise ValueError("miss_select needs at least one candidate")
    if budget > len(ids):
        raise ValueError(f"budget {budget} exceeds the {len(ids)} candidates")
    H = entropy(predict_proba(model, np.atleast_2d(features)))
    chosen = _top_entropy(ids, H, budget)
    return QuerySelection(round, chosen, "miss", {"candidates": ids, "entropy": H})


def random_select(ids, budget, seed, round=0):
    ids = np.asarray(ids)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    k = min(budget, len(ids))
    return QuerySelection(round, rng.choice(ids, size=k, replace=False), "random")


def uncertainty_select(ids, features, model, budget, round=0):
    ids = np.asarray(ids)
    if len(ids) == 0:
        raise ValueError("no unlabeled samples")
    H = entropy(predict_proba(model, np.atleast_2d(features)))
    return QuerySelection(round, _top_entropy(ids, H, min(budget, len(ids))), "uncertainty", {"entropy": H})


def certainty_select(ids, features, model, budget, round=0):
    ids = np.asarray(ids)
    if len(ids) == 0:
        raise ValueError("no unlabeled samples")
    H = entropy(predict_proba(model, np.atleast_2d(features)))
    chosen = _top_entropy(ids, H, min(budget, len(ids)), highest=False)
    return QuerySelection(round, chosen, "certainty", {"entropy": H})


def coreset_select(ids, features, labeled_features, budget, round=0):
    """Greedy k-center: each pick maximizes its Euclidean distance to the covered set.

    Without labeled points the first pick is the lowest id.
    """
    ids = np.asarray(ids)
    if len(ids) == 0:
        raise ValueError("no unlabeled samples")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    L = np.asarray(labeled_features, dtype=np.float64).reshape(-1, X.shape[1])
    if len(L):
        _, min_d2 = _kernels.nearest_centroid(X, L)
    else:
        min_d2 = np.full(len(ids), np.inf)
    picks = _kernels.kcenter_greedy(X, min_d2, min(budget, len(ids)))
    return QuerySelection(round, ids[picks], "coreset")


def openal_select(pool, model, budget, flags=OpenALFlags(), seed=0, round=0):
    """Two-stage query: FTSS candidates, then MISS entropy ranking.

    ``only_miss`` skips FTSS (plain uncertainty over U); ``disable_miss`` sets
    the candidate size to the budget and returns the FTSS order directly.
    """
    U = pool.unlabeled()
    if len(U) == 0:
        raise ValueError("pool has no unlabeled samples")
    budget = min(budget, len(U))
    label = flags.label()
    if flags.only_miss:
        sel = uncertainty_select(pool.ids[U], pool.features[U], model, budget, round)
        sel.strategy = label
        return sel

    lt = pool.labeled_target()
    ln = pool.queried_nontarget()
    t_clusters = ftss.target_clusters(pool.features[lt], pool.fine[lt]) if len(lt) else []
    w_clusters = ftss.nontarget_clusters(pool.features[ln], flags.W, seed)
    use_target = not flags.disable_st
    if use_target and not t_clusters:
        raise ValueError("no labeled target samples: the engine handles this cold start")

    size = budget if flags.disable_miss else flags.candidate_multiplier * budget
    candidates, table = ftss.ftss_select(
        pool, size, t_clusters, w_clusters, use_target, not flags.disable_sw
    )
    diag = {"candidates": candidates, "scores": table,
            "n_target_clusters": len(t_clusters), "n_nontarget_clusters": len(w_clusters)}
    if flags.disable_miss:
        return QuerySelection(round, candidates[:budget], label, diag)
    pos = pool.positions(candidates)
    sel = miss_select(candidates, pool.features[pos], model, budget, round)
    diag["entropy"] = sel.diagnostics["entropy"]
    return QuerySelection(round, sel.ids, label, diag)
