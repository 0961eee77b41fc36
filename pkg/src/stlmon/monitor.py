"""Online monitor over precomputed feasible sets, and a model-free baseline.

Each step is a set-membership test: ``G`` instants check ``X_k``; ``F`` and
``U'`` instants first record whether the segment's target was visited and
then check ``X_k`` (obligation pending) or ``Xhat_k`` (obligation met).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .feasible import FeasibleSets
from .gridset import GridSet, rasterize
from .stl import Op, SegmentedFormula, contains, formula_digest

__all__ = [
    "Outcome", "Verdict", "MonitorState", "MonitorError", "ProvenanceError",
    "init_monitor", "step", "BaselineState", "init_baseline", "model_free_step", "lead_time",
]


class MonitorError(RuntimeError):
    pass


class ProvenanceError(ValueError):
    pass


class Outcome(str, enum.Enum):
    FEASIBLE = "feasible"
    VIOLATED = "violated"


@dataclass(frozen=True)
class Verdict:
    k: int
    outcome: Outcome
    segment: int
    op: Op
    flag: bool
    set: str  # "X" or "Xhat"

    @property
    def violated(self) -> bool:
        return self.outcome is Outcome.VIOLATED

    def to_json(self) -> dict:
        return {"k": self.k, "verdict": self.outcome.value, "segment": self.segment,
                "op": self.op.value, "flag": self.flag, "set": self.set}


@dataclass
class MonitorState:
    fs: FeasibleSets
    sf: SegmentedFormula
    k: int = 0
    i: int = 0
    flags: list[bool] = field(default_factory=list)
    verdict: Outcome | None = None
    targets: list[GridSet | None] = field(default_factory=list, repr=False)

    @property
    def done(self) -> bool:
        return self.verdict is Outcome.VIOLATED or self.k > self.sf.horizon


def init_monitor(fs: FeasibleSets, sf: SegmentedFormula) -> MonitorState:
    if fs.formula_sha256 != formula_digest(sf.source):
        raise ProvenanceError("feasible sets were computed for a different formula")
    if fs.horizon != sf.horizon:
        raise ProvenanceError(f"artifact horizon {fs.horizon} != formula horizon {sf.horizon}")
    targets = [rasterize(s.target, fs.geometry, fs.mode) if s.op is not Op.ALWAYS else None
               for s in sf.segments]
    return MonitorState(fs, sf, flags=[False] * len(sf), targets=targets)


def step(st: MonitorState, x) -> Verdict:
    """Consume ``x_k`` and return the verdict for instant ``k``."""
    if st.verdict is Outcome.VIOLATED:
        raise MonitorError(f"monitor already reported a violation; step at k={st.k} rejected")
    if st.k > st.sf.horizon:
        raise MonitorError(f"instant {st.k} beyond horizon {st.sf.horizon}")
    k, i = st.k, st.i
    seg = st.sf.segments[i]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if seg.op is Op.ALWAYS:
        which, ok = "X", st.fs.X[k].member(x)
    else:
        if not st.flags[i] and st.targets[i].member(x):
            st.flags[i] = True
        if st.flags[i]:
            which, ok = "Xhat", st.fs.Xhat[k].member(x)
        else:
            which, ok = "X", st.fs.X[k].member(x)
    outcome = Outcome.FEASIBLE if ok else Outcome.VIOLATED
    verdict = Verdict(k, outcome, i, seg.op, st.flags[i], which)
    if not ok:
        st.verdict = Outcome.VIOLATED
    st.k = k + 1
    if st.k <= st.sf.horizon:
        st.i = st.sf.segment_index(st.k)
    return verdict


@dataclass
class BaselineState:
    """Model-free comparator: region membership and deadlines only."""

    sf: SegmentedFormula
    k: int = 0
    i: int = 0
    flags: list[bool] = field(default_factory=list)
    verdict: Outcome | None = None


def init_baseline(sf: SegmentedFormula) -> BaselineState:
    return BaselineState(sf, flags=[False] * len(sf))


def model_free_step(st: BaselineState, x) -> Verdict:
    if st.verdict is Outcome.VIOLATED:
        raise MonitorError(f"baseline already reported a violation; step at k={st.k} rejected")
    if st.k > st.sf.horizon:
        raise MonitorError(f"instant {st.k} beyond horizon {st.sf.horizon}")
    k, i = st.k, st.i
    seg = st.sf.segments[i]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    last = k == seg.b
    if seg.op is Op.ALWAYS:
        bad = not contains(seg.regions[0], x)
    else:
        if contains(seg.target, x):
            st.flags[i] = True
        pending = not st.flags[i]
        bad = pending and last
        if seg.op is Op.UNTIL_PRIME:
            bad = bad or (pending and not contains(seg.regions[0], x))
    outcome = Outcome.VIOLATED if bad else Outcome.FEASIBLE
    if bad:
        st.verdict = Outcome.VIOLATED
    st.k = k + 1
    if st.k <= st.sf.horizon:
        st.i = st.sf.segment_index(st.k)
    return Verdict(k, outcome, i, seg.op, st.flags[i], "region")


def lead_time(model_based: list[Verdict], baseline: list[Verdict]) -> int | None:
    """Instants by which the model-based monitor alarms before the baseline.

    ``None`` when the model-based monitor never alarms.  If the baseline
    never alarms either, the lead is measured against the first instant past
    the observed stream.
    """
    mb = next((v.k for v in model_based if v.violated), None)
    if mb is None:
        return None
    bl = next((v.k for v in baseline if v.violated), None)
    if bl is None:
        bl = max((v.k for v in baseline), default=mb) + 1
    return bl - mb
