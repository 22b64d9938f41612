"""Normalized per-modality cost model: quality ladders, budget catalogue, smell costs.

Visual quality is indexed by resolution step k out of ``n`` (cost grows
quadratically, (k/n)^2); audio quality by impulse-response sampling rate
(cost grows linearly, f/f_max). Olfactory cost is a per-scenario constant
taken from transport-simulation timing ratios. All costs are normalized so
the top quality level of each modality costs exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

import yaml

EPS = 1e-9

VISUAL_LADDER_STEPS = 240
AUDIO_MAX_RATE_HZ = 352_800
AUDIO_RATE_STEP_HZ = AUDIO_MAX_RATE_HZ / VISUAL_LADDER_STEPS  # 1470 Hz per step
DEFAULT_LADDER_SIZE = 80


class CostError(Exception):
    """Base class for cost-model errors."""


class IndexOutOfRangeError(CostError):
    pass


class OutOfRangeError(CostError):
    pass


class UnknownScenarioError(CostError):
    pass


class UnknownBudgetError(CostError):
    pass


class LadderConfigError(CostError):
    pass


class Modality(str, Enum):
    VISUAL = "visual"
    AUDIO = "audio"


def visual_cost(k: int, n: int = VISUAL_LADDER_STEPS) -> float:
    """Normalized cost of the k-th visual quality step out of n: (k/n)^2."""
    if not 1 <= k <= n:
        raise IndexOutOfRangeError(f"visual step {k} outside 1..{n}")
    return (k / n) ** 2


def audio_cost(f_k: float, f_max: float = AUDIO_MAX_RATE_HZ) -> float:
    """Normalized cost of an impulse response sampled at f_k Hz: f_k / f_max."""
    if not 0 < f_k <= f_max:
        raise OutOfRangeError(f"sampling rate {f_k} outside (0, {f_max}]")
    return f_k / f_max


@dataclass(frozen=True)
class LadderLevel:
    index: int        # position on the unfiltered quality scale (1-based)
    descriptor: str   # human-readable quality label
    cost: float       # normalized cost in (0, 1]


@dataclass(frozen=True)
class QualityLadder:
    """Ordered quality levels for one modality with strictly increasing costs."""

    modality: Modality
    levels: tuple[LadderLevel, ...]

    def __post_init__(self) -> None:
        if not self.levels:
            raise LadderConfigError("ladder must have at least one level")
        costs = [lv.cost for lv in self.levels]
        if any(b <= a for a, b in zip(costs, costs[1:])):
            raise LadderConfigError("ladder costs must be strictly increasing")
        if costs[0] <= 0:
            raise LadderConfigError("ladder costs must be positive")
        if abs(costs[-1] - 1.0) > 1e-12:
            raise LadderConfigError("top ladder level must cost exactly 1")

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def costs(self) -> tuple[float, ...]:
        return tuple(lv.cost for lv in self.levels)

    @property
    def min_cost(self) -> float:
        return self.levels[0].cost


def log_spaced_indices(n_total: int, n_keep: int) -> list[int]:
    """n_keep strictly increasing integers in [1, n_total], approximately
    log-spaced, always including 1 and n_total."""
    if n_keep > n_total:
        raise LadderConfigError(f"cannot keep {n_keep} of {n_total} indices")
    if n_keep == 1:
        return [n_total]
    ratio = n_total ** (1.0 / (n_keep - 1))
    idx = [int(round(ratio**i)) for i in range(n_keep)]
    for i in range(1, n_keep):  # enforce strict increase from below
        idx[i] = max(idx[i], idx[i - 1] + 1)
    idx[-1] = n_total
    for i in range(n_keep - 2, -1, -1):  # pull back any overshoot past the top
        idx[i] = min(idx[i], idx[i + 1] - 1)
    assert idx[0] >= 1
    return idx


def default_visual_ladder(n_levels: int = DEFAULT_LADDER_SIZE,
                          n_total: int = VISUAL_LADDER_STEPS) -> QualityLadder:
    """Perceptually filtered visual ladder stand-in: log-spaced resolution steps.

    The k-th step renders at (16k)x(9k) pixels, so the top step is 3840x2160.
    """
    levels = tuple(
        LadderLevel(index=k, descriptor=f"{16 * k}x{9 * k}", cost=visual_cost(k, n_total))
        for k in log_spaced_indices(n_total, n_levels)
    )
    return QualityLadder(Modality.VISUAL, levels)


def default_audio_ladder(n_levels: int = DEFAULT_LADDER_SIZE,
                         n_total: int = VISUAL_LADDER_STEPS) -> QualityLadder:
    """Perceptually filtered audio ladder stand-in: log-spaced sampling rates."""
    levels = tuple(
        LadderLevel(index=k, descriptor=f"{int(k * AUDIO_RATE_STEP_HZ)} Hz",
                    cost=audio_cost(k * AUDIO_RATE_STEP_HZ))
        for k in log_spaced_indices(n_total, n_levels)
    )
    return QualityLadder(Modality.AUDIO, levels)


@dataclass(frozen=True)
class Budget:
    label: str
    value: float                      # normalized cost units
    level_count: Optional[int] = None  # informational catalogue metadata

    def __post_init__(self) -> None:
        if self.value <= 0:
            raise ValueError(f"budget value must be positive, got {self.value}")


_CATALOGUE = (
    Budget("B1", 0.0625, 28),
    Budget("B2", 0.11, 38),
    Budget("B3", 0.25, 48),
    Budget("B4", 1.0, 80),
    Budget("B5", 1.12, 48),
)

REFERENCE_BUDGET_LABEL = "B4"  # the full-quality single-modality budget (value 1)


def budget_catalogue() -> tuple[Budget, ...]:
    """The five standard experiment budgets."""
    return _CATALOGUE


def budget(label: str) -> Budget:
    for b in _CATALOGUE:
        if b.label.upper() == label.upper():
            return b
    raise UnknownBudgetError(f"unknown budget label {label!r}")


def midpoint(label_a: str, label_b: str) -> Budget:
    """Budget halfway between two catalogued budgets (used for held-out tests)."""
    a, b = budget(label_a), budget(label_b)
    return Budget(f"mid({a.label},{b.label})", (a.value + b.value) / 2.0)


def validation_budgets() -> tuple[Budget, ...]:
    """Held-out budgets NB1..NB3: midpoints of (B1,B2), (B2,B3), (B3,B4)."""
    return (
        Budget("NB1", midpoint("B1", "B2").value),
        Budget("NB2", midpoint("B2", "B3").value),
        Budget("NB3", midpoint("B3", "B4").value),
    )


_SCENARIO_ALIASES = {
    "bathroom": "Bathroom",
    "bath": "Bathroom",
    "car": "Car",
    "kitchen": "Kitchen",
    "kitti": "Kitti",
}

DEFAULT_SMELL_COSTS: Mapping[str, float] = {
    "Bathroom": 0.037,
    "Car": 0.029,
    "Kitchen": 0.040,
    "Kitti": 0.032,
}


def canonical_scenario(name: str) -> str:
    try:
        return _SCENARIO_ALIASES[name.strip().lower()]
    except KeyError:
        raise UnknownScenarioError(f"unknown scenario {name!r}") from None


def smell_cost(scenario: str,
               table: Mapping[str, float] = DEFAULT_SMELL_COSTS) -> float:
    """Normalized cost of enabling the smell impulse in a scenario."""
    name = canonical_scenario(scenario)
    if name not in table:
        raise UnknownScenarioError(f"no smell cost configured for {name!r}")
    return table[name]


def affordable_level_count(ladder: QualityLadder, budget: Budget,
                           other_min_cost: float = 0.0) -> int:
    """Number of ladder levels affordable once the other modalities' cheapest
    levels are paid for."""
    headroom = budget.value - other_min_cost
    return sum(1 for lv in ladder.levels if lv.cost <= headroom + EPS)


@dataclass(frozen=True)
class CostConfig:
    """Bundle of ladders, budgets and the smell-cost table for one deployment."""

    visual_ladder: QualityLadder = field(default_factory=default_visual_ladder)
    audio_ladder: QualityLadder = field(default_factory=default_audio_ladder)
    smell_costs: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_SMELL_COSTS))
    budgets: tuple[Budget, ...] = _CATALOGUE

    def ladder(self, modality: Modality | str) -> QualityLadder:
        m = Modality(modality)
        return self.visual_ladder if m is Modality.VISUAL else self.audio_ladder

    def budget(self, label: str) -> Budget:
        for b in self.budgets:
            if b.label.upper() == label.upper():
                return b
        raise UnknownBudgetError(f"unknown budget label {label!r}")

    def smell_cost(self, scenario: str) -> float:
        return smell_cost(scenario, self.smell_costs)

    @property
    def scenarios(self) -> tuple[str, ...]:
        return tuple(self.smell_costs)


def _ladder_from_config(modality: Modality, node: dict) -> QualityLadder:
    if "levels" in node:
        levels = tuple(
            LadderLevel(int(lv["index"]), str(lv.get("descriptor", lv["index"])),
                        float(lv["cost"]))
            for lv in node["levels"]
        )
        return QualityLadder(modality, levels)
    n_levels = int(node.get("n_levels", DEFAULT_LADDER_SIZE))
    n_total = int(node.get("n_total", VISUAL_LADDER_STEPS))
    if modality is Modality.VISUAL:
        return default_visual_ladder(n_levels, n_total)
    return default_audio_ladder(n_levels, n_total)


def load_cost_config(path: str) -> CostConfig:
    """Read ladders / budgets / smell costs from a YAML file; missing sections
    fall back to the built-in defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    kwargs: dict = {}
    ladders = raw.get("ladders", {})
    if "visual" in ladders:
        kwargs["visual_ladder"] = _ladder_from_config(Modality.VISUAL, ladders["visual"])
    if "audio" in ladders:
        kwargs["audio_ladder"] = _ladder_from_config(Modality.AUDIO, ladders["audio"])
    if "smell_costs" in raw:
        kwargs["smell_costs"] = {
            canonical_scenario(k): float(v) for k, v in raw["smell_costs"].items()
        }
    if "budgets" in raw:
        kwargs["budgets"] = tuple(
            Budget(str(b["label"]), float(b["value"]),
                   int(b["level_count"]) if b.get("level_count") is not None else None)
            for b in raw["budgets"]
        )
    return CostConfig(**kwargs)
