"""Interestingness measures over displays and sessions.

Five per-step scores: an operation-conditioned interest score (compact
group views, strongly deviating filters), diversity against everything seen
so far, readability via compactness gain, peculiarity against the initial
display, and rule-based coherence. Raw scores are min-max normalized per
session for reporting and for classifying which measure a session leans on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import env as _env
from .tabular import Dataset, Display, column_histogram

MEASURE_NAMES = ("a_int", "diversity", "coherence", "readability", "peculiarity")
DEFAULT_KL_EPS = 1e-6


@dataclass(frozen=True)
class SigmoidSpec:
    center: float
    width: float
    decreasing: bool = False

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("sigmoid width must be positive")


def sigmoid(x: float, spec: SigmoidSpec) -> float:
    z = (x - spec.center) / spec.width
    z = max(-60.0, min(60.0, z))
    value = 1.0 / (1.0 + math.exp(-z))
    return 1.0 - value if spec.decreasing else value


@dataclass(frozen=True)
class MeasureSpecs:
    """Pinned sigmoid shapes; the row-dependent ones come from the factory."""
    group_size: SigmoidSpec        # over (number of groups) x (grouped attrs)
    row_mass: SigmoidSpec          # over the filtered tuple count
    divergence: SigmoidSpec        # over max per-column KL divergence
    compactness: SigmoidSpec       # over (number of groups) x (visible rows)


def default_measure_specs(row_count: int) -> MeasureSpecs:
    """Sigmoid shapes scaled to the dataset.

    The divergence sigmoid spans the KL range that epsilon-smoothed
    histograms actually produce (losing most of a column's support costs
    about -ln(eps) ~ 14 nats), so filter scores spread out instead of
    saturating; the compactness width of half the row count keeps
    compactness ratios, and with them readability, within a usable band.
    """
    n = max(row_count, 1)
    return MeasureSpecs(
        group_size=SigmoidSpec(center=50.0, width=15.0, decreasing=True),
        row_mass=SigmoidSpec(center=n / 2.0, width=n / 10.0, decreasing=True),
        divergence=SigmoidSpec(center=7.0, width=3.0),
        compactness=SigmoidSpec(center=n / 2.0, width=n / 2.0, decreasing=True),
    )


def kl_divergence(p: dict, q: dict, eps: float = DEFAULT_KL_EPS) -> float:
    """KL(p || q) over the union support.

    Zero-mass q entries are smoothed to eps so the sum stays finite; p
    entries with zero mass contribute nothing. Two empty histograms give 0.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not p and not q:
        return 0.0
    total = 0.0
    for value, mass in p.items():
        if mass <= 0:
            continue
        q_mass = q.get(value, 0.0)
        total += mass * math.log(mass / (q_mass if q_mass > 0 else eps))
    return total


def max_column_kl(before: Display, after: Display, base: Dataset,
                  eps: float = DEFAULT_KL_EPS) -> float:
    return max(
        kl_divergence(column_histogram(before, col), column_histogram(after, col), eps)
        for col in base.column_names
    )


def a_int(prev: Display, cur: Display, action, specs: MeasureSpecs,
          base: Dataset | None = None) -> float:
    """Operation-conditioned interest in [0, 1].

    GROUP: ratio of a decreasing sigmoid over the group count to one over
    the tuple count, clamped, so few groups over many rows score high.
    FILTER: sigmoid of the largest per-column KL shift. BACK/STOP: 0.
    """
    if action.kind == "GROUP":
        g = cur.group_count * 1  # one grouped attribute per action
        num = sigmoid(float(g), specs.group_size)
        den = sigmoid(float(cur.row_count), specs.row_mass)
        if den <= 0:
            return 1.0
        return min(1.0, max(0.0, num / den))
    if action.kind == "FILTER":
        ds = base if base is not None else cur.dataset
        return sigmoid(max_column_kl(prev, cur, ds), specs.divergence)
    return 0.0


def diversity(cur: Display, history, base: Dataset) -> float:
    """Minimum Euclidean distance from the current display's encoding to any
    previously seen display's encoding."""
    if not history:
        raise ValueError("diversity needs at least one earlier display")
    vec = _env.encode_display(cur, base)
    return min(
        float(np.linalg.norm(vec - _env.encode_display(d, base))) for d in history
    )


def _compactness(display: Display, specs: MeasureSpecs) -> float:
    g = display.group_count if display.grouping is not None else 1
    c = sigmoid(float(g * len(display.visible_rows)), specs.compactness)
    return max(c, 1e-9)


def readability(prev: Display, cur: Display, specs: MeasureSpecs) -> float:
    """Compactness gain, 1 - C(prev)/C(cur), floored at zero.

    Expanding the view (a BACK, a coarser regrouping) earns 0 rather than an
    unbounded negative score; otherwise one deep expansion would stretch the
    session min-max range so far that every other step of this measure
    normalizes to the top and drowns out the remaining measures.
    """
    return max(0.0, 1.0 - _compactness(prev, specs) / _compactness(cur, specs))


def peculiarity(cur: Display, initial: Display, specs: MeasureSpecs,
                base: Dataset | None = None) -> float:
    ds = base if base is not None else cur.dataset
    return sigmoid(max_column_kl(initial, cur, ds), specs.divergence)


@dataclass(frozen=True)
class CoherenceRule:
    match: dict
    score: float


@dataclass(frozen=True)
class CoherenceRuleset:
    filterable_columns: frozenset = frozenset()
    groupable_columns: frozenset = frozenset()
    rules: tuple[CoherenceRule, ...] = ()

    @classmethod
    def from_json(cls, source) -> "CoherenceRuleset":
        if isinstance(source, (str,)) or hasattr(source, "read"):
            with open(source) as fh:
                obj = json.load(fh)
        else:
            obj = source
        try:
            rules = tuple(CoherenceRule(dict(r["match"]), float(r["score"]))
                          for r in obj.get("rules", ()))
            return cls(
                filterable_columns=frozenset(obj.get("filterable_columns", ())),
                groupable_columns=frozenset(obj.get("groupable_columns", ())),
                rules=rules,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed coherence ruleset: {exc}") from exc


EMPTY_RULESET = CoherenceRuleset()


def _action_column(action) -> str | None:
    if action.kind == "FILTER":
        return action.filter.column
    if action.kind == "GROUP":
        return action.group.grp_col
    return None


def _rule_matches(match: dict, action, prior_actions) -> bool:
    if "kind" in match and match["kind"] != action.kind:
        return False
    if "column" in match and match["column"] != _action_column(action):
        return False
    if "op" in match and not (action.kind == "FILTER" and action.filter.op == match["op"]):
        return False
    if "agg_func" in match and not (action.kind == "GROUP"
                                    and action.group.agg_func == match["agg_func"]):
        return False
    if "prior_kind" in match:
        if not prior_actions or prior_actions[-1].kind != match["prior_kind"]:
            return False
    return True


def coherence(prev: Display, cur: Display, action, prior_actions,
              ruleset: CoherenceRuleset = EMPTY_RULESET) -> float:
    """Rule score in [-1, 1]. Empty or unchanged views are incoherent (-1)
    regardless of the ruleset; otherwise matching rule scores add up."""
    if len(cur.visible_rows) == 0:
        return -1.0
    if cur.visible_rows == prev.visible_rows:
        return -1.0
    score = 0.0
    col = _action_column(action)
    if action.kind == "FILTER" and ruleset.filterable_columns:
        score += 0.5 if col in ruleset.filterable_columns else -0.5
    if action.kind == "GROUP" and ruleset.groupable_columns:
        score += 0.5 if col in ruleset.groupable_columns else -0.5
    for rule in ruleset.rules:
        if _rule_matches(rule.match, action, prior_actions):
            score += rule.score
    return max(-1.0, min(1.0, score))


@dataclass(frozen=True)
class MeasureScores:
    a_int: float
    diversity: float
    coherence: float
    readability: float
    peculiarity: float

    def get(self, name: str) -> float:
        return getattr(self, name)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in MEASURE_NAMES}


def score_session(dataset: Dataset, actions, ruleset: CoherenceRuleset = EMPTY_RULESET,
                  specs: MeasureSpecs | None = None) -> list[MeasureScores]:
    """Replay a session and compute all five raw scores per step."""
    if specs is None:
        specs = default_measure_specs(dataset.row_count)
    steps, history = _env.walk_displays(dataset, actions)
    initial = history[0]
    scores = []
    seen = [initial]
    prior: list = []
    for prev, action, cur in steps:
        scores.append(MeasureScores(
            a_int=a_int(prev, cur, action, specs, dataset),
            diversity=diversity(cur, seen, dataset),
            coherence=coherence(prev, cur, action, prior, ruleset),
            readability=readability(prev, cur, specs),
            peculiarity=peculiarity(cur, initial, specs, dataset),
        ))
        prior.append(action)
        if action.kind != "STOP":
            seen.append(cur)
    return scores


def normalize_session(raw: list[MeasureScores]) -> list[MeasureScores]:
    """Min-max normalize each measure across the session's steps.

    A constant series maps to all zeros.
    """
    if not raw:
        raise ValueError("cannot normalize an empty session")
    normalized = [dict() for _ in raw]
    for name in MEASURE_NAMES:
        series = [s.get(name) for s in raw]
        lo, hi = min(series), max(series)
        span = hi - lo
        for slot, value in zip(normalized, series):
            slot[name] = 0.0 if span <= 0 else (value - lo) / span
    return [MeasureScores(**slot) for slot in normalized]


def classify_session(normalized: list[MeasureScores], quantile: float = 0.75,
                     measures=("a_int", "diversity", "readability")) -> str:
    """Name of the measure with the highest per-session quantile score.

    Ties go to the earliest measure in `measures`.
    """
    if not normalized:
        raise ValueError("cannot classify an empty session")
    if not 0 < quantile < 1:
        raise ValueError("quantile must be in (0, 1)")
    best_name, best_q = None, -math.inf
    for name in measures:
        series = [s.get(name) for s in normalized]
        q = float(np.quantile(series, quantile))
        if q > best_q:
            best_name, best_q = name, q
    return best_name
