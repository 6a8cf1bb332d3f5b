"""Session-quality metrics: view precision, order-aware n-gram precision
(TBLEU-1/2/3), and a similarity score that counts nearly identical views as
hits under an order-preserving alignment.

Views are the displays produced by FILTER/GROUP steps, identified by their
operation fingerprint and carried with their feature encoding.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import nn
from .env import (ACTION_KINDS, RELEVANT_HEADS, EdaEnv, HeadLayout,
                  Trajectory, action_from_heads, walk_displays)
from .tabular import Dataset, display_fingerprint
from .env import encode_display

DEFAULT_SIM_THRESHOLD = 0.9
METRIC_COLUMNS = ("precision", "tbleu1", "tbleu2", "tbleu3", "eda_sim")

_RELEVANT_BY_KIND = tuple(RELEVANT_HEADS[k] for k in ACTION_KINDS)


@dataclass(frozen=True)
class View:
    fingerprint: str
    vec: np.ndarray


def views_from_actions(dataset: Dataset, actions,
                       dedupe_consecutive: bool = False) -> list[View]:
    """Views of a session: one per FILTER/GROUP step (BACK and STOP add no
    view). Gold sessions additionally collapse consecutive identical views."""
    steps, _ = walk_displays(dataset, actions)
    views = []
    for _, action, cur in steps:
        if action.kind not in ("FILTER", "GROUP"):
            continue
        fp = display_fingerprint(cur)
        if dedupe_consecutive and views and views[-1].fingerprint == fp:
            continue
        views.append(View(fp, encode_display(cur, dataset)))
    return views


def precision(gen: list[View], gold: list[list[View]]) -> float:
    """Fraction of generated views (with multiplicity) that appear anywhere
    in the gold sessions."""
    if not gen:
        raise ValueError("generated session has no views")
    if not gold:
        raise ValueError("need at least one gold session")
    gold_fps = {v.fingerprint for session in gold for v in session}
    hits = sum(v.fingerprint in gold_fps for v in gen)
    return hits / len(gen)


def _ngrams(fps, n: int):
    return [tuple(fps[i:i + n]) for i in range(len(fps) - n + 1)]


def tbleu(gen: list[View], gold: list[list[View]], n: int) -> float:
    """Modified n-gram precision over view fingerprints with per-gram counts
    clipped to the best gold session, times the brevity penalty against the
    closest gold length. Orders are reported separately (no geometric mean).
    """
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    if not gold:
        raise ValueError("need at least one gold session")
    gen_fps = [v.fingerprint for v in gen]
    if len(gen_fps) < n:
        return 0.0
    counts = Counter(_ngrams(gen_fps, n))
    max_ref = Counter()
    for session in gold:
        ref = Counter(_ngrams([v.fingerprint for v in session], n))
        for gram in counts:
            max_ref[gram] = max(max_ref[gram], ref[gram])
    clipped = sum(min(c, max_ref[gram]) for gram, c in counts.items())
    prec = clipped / sum(counts.values())
    c = len(gen_fps)
    r = min((len(s) for s in gold), key=lambda L: (abs(L - c), L))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * prec


def display_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """1 at identical encodings, 0 at the far corners of the unit box."""
    if a.shape != b.shape:
        raise ValueError("encodings must have equal length")
    max_dist = math.sqrt(a.shape[0])
    return 1.0 - float(np.linalg.norm(a - b)) / max_dist


def eda_sim(gen: list[View], gold: list[list[View]],
            threshold: float = DEFAULT_SIM_THRESHOLD) -> float:
    """Order-preserving alignment score, maximized over gold sessions.

    Views pair up without crossings when at least `threshold` similar; the
    maximum number of such pairs (a longest-common-subsequence style dynamic
    program) over max(len(gen), len(gold)) is the session score. Using the
    maximum matching keeps the score monotone under threshold relaxation,
    which a greedy earliest-match scan does not guarantee.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    if not gold:
        raise ValueError("need at least one gold session")
    best = 0.0
    for session in gold:
        n, m = len(gen), len(session)
        prev = [0] * (m + 1)
        for i in range(1, n + 1):
            cur = [0] * (m + 1)
            for j in range(1, m + 1):
                hit = display_similarity(gen[i - 1].vec,
                                         session[j - 1].vec) >= threshold
                cur[j] = max(prev[j], cur[j - 1], prev[j - 1] + (1 if hit else 0))
            prev = cur
        best = max(best, prev[m] / max(n, m, 1))
    return best


def all_metrics(gen: list[View], gold: list[list[View]],
                threshold: float = DEFAULT_SIM_THRESHOLD) -> dict:
    return {
        "precision": precision(gen, gold),
        "tbleu1": tbleu(gen, gold, 1),
        "tbleu2": tbleu(gen, gold, 2),
        "tbleu3": tbleu(gen, gold, 3),
        "eda_sim": eda_sim(gen, gold, threshold),
    }


def generate_session(policy: nn.PolicyNet, dataset: Dataset,
                     layout: HeadLayout, horizon: int = 12,
                     mode: str = "greedy",
                     rng: np.random.Generator | None = None) -> Trajectory:
    """Roll the policy over a dataset; greedy argmax or sampled actions."""
    if mode not in ("greedy", "sample"):
        raise ValueError("mode must be 'greedy' or 'sample'")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")
    env = EdaEnv(dataset, layout, horizon)
    state = env.reset()
    actions = []
    while not state.done:
        dists = policy.head_probs(env.encode_state(state))
        if mode == "greedy":
            heads = nn.greedy_action(dists)
        else:
            heads, _ = nn.sample_action(dists, rng, _RELEVANT_BY_KIND)
        action = action_from_heads(heads, state.current, dataset, layout)
        state = env.step(state, action)
        actions.append(action)
    return Trajectory(dataset.name, tuple(actions))


def evaluate_sessions(dataset: Dataset, sessions, gold_trajectories,
                      threshold: float = DEFAULT_SIM_THRESHOLD) -> dict:
    """Mean metrics of generated sessions against one dataset's gold set."""
    gold_views = [views_from_actions(dataset, t.actions, dedupe_consecutive=True)
                  for t in gold_trajectories]
    gold_views = [g for g in gold_views if g]
    if not gold_views:
        raise ValueError(f"gold sessions for {dataset.name!r} contain no views")
    rows = []
    for traj in sessions:
        gen_views = views_from_actions(dataset, traj.actions)
        if not gen_views:
            rows.append({k: 0.0 for k in METRIC_COLUMNS})
        else:
            rows.append(all_metrics(gen_views, gold_views, threshold))
    return {key: float(np.mean([r[key] for r in rows])) for key in METRIC_COLUMNS}


def evaluate_model(policy: nn.PolicyNet, datasets, gold_by_dataset: dict,
                   n_sessions: int = 1, horizon: int = 12,
                   layout: HeadLayout | None = None, mode: str = "greedy",
                   rng: np.random.Generator | None = None,
                   threshold: float = DEFAULT_SIM_THRESHOLD) -> list[dict]:
    """Per-dataset metric rows plus an aggregate mean row."""
    rows = []
    for ds in datasets:
        lay = layout or HeadLayout(len(ds.columns))
        sessions = [generate_session(policy, ds, lay, horizon, mode, rng)
                    for _ in range(n_sessions)]
        metrics = evaluate_sessions(ds, sessions, gold_by_dataset[ds.name],
                                    threshold)
        rows.append({"dataset": ds.name, **metrics})
    if len(rows) > 1:
        agg = {key: float(np.mean([r[key] for r in rows]))
               for key in METRIC_COLUMNS}
        rows.append({"dataset": "mean", **agg})
    return rows


def report_text(rows) -> str:
    """Aligned table with one row per dataset and the five metric columns."""
    headers = ("Dataset", "Precision", "TBLEU-1", "TBLEU-2", "TBLEU-3", "EDA-Sim")
    body = [[str(r["dataset"])] + [f"{r[k]:.4f}" for k in METRIC_COLUMNS]
            for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for b in body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(b, widths)))
    return "\n".join(lines)
