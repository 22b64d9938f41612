"""Budget-to-allocation regression models.

Predicts, from a budget size (and optionally the scenario), whether the
smell impulse should be enabled and what share of the budget goes to visual
and audio quality. The smell component is a logistic regression on the
on/off decision; the visual and audio components are linear regressions on
the allocated percentages. The scenario-aware variant adds per-scenario
intercept offsets that are kept only when statistically significant.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import norm as normal_dist, t as t_dist

from .costs import Budget, canonical_scenario

BASELINE_SCENARIO = "Bathroom"
REFERENCE_BUDGET_VALUE = 1.0   # the budget whose regressor maps to 100


class AllocationError(Exception):
    pass


class ScenarioRequiredError(AllocationError):
    pass


class UnknownScenarioError(AllocationError):
    pass


class CollinearError(AllocationError):
    pass


class SeparationDetectedError(AllocationError):
    pass


class InsufficientDataError(AllocationError):
    pass


class EmptyGroupError(AllocationError):
    pass


class ModelKind(str, Enum):
    M1 = "M1"   # scenario-blind
    M2 = "M2"   # scenario-aware intercept offsets


class RegressorMode(str, Enum):
    PERCENT_OF_REFERENCE = "percent_of_reference"  # budget value * 100
    LEVEL_COUNT = "level_count"                    # catalogue level count


def budget_regressor(budget: Budget,
                     mode: RegressorMode = RegressorMode.PERCENT_OF_REFERENCE
                     ) -> float:
    """Numeric budget covariate used by the models.

    The default expresses the budget as a percentage of the reference
    budget (value 1.0), which puts the catalogue range at 6.25..112 and
    matches the scale the shipped coefficients were estimated on. The
    level-count alternative is available behind the mode switch.
    """
    if mode is RegressorMode.PERCENT_OF_REFERENCE:
        return budget.value / REFERENCE_BUDGET_VALUE * 100.0
    if budget.level_count is None:
        raise AllocationError(f"budget {budget.label} has no level count")
    return float(budget.level_count)


@dataclass(frozen=True)
class SenseCoefficients:
    beta_i: float                               # intercept
    beta_b: float                               # budget slope
    gamma: Mapping[str, float] = field(default_factory=dict)  # scenario offsets

    def linear(self, b: float, scenario: Optional[str]) -> float:
        offset = self.gamma.get(scenario, 0.0) if scenario else 0.0
        return self.beta_i + self.beta_b * b + offset


@dataclass(frozen=True)
class ModelCoefficients:
    model_kind: ModelKind
    smell: SenseCoefficients
    visual: SenseCoefficients
    audio: SenseCoefficients
    baseline_scenario: str = BASELINE_SCENARIO
    scenarios: tuple[str, ...] = ()   # scenario levels the model was fit on

    def __post_init__(self) -> None:
        if self.model_kind is ModelKind.M1:
            for sense in (self.smell, self.visual, self.audio):
                if sense.gamma:
                    raise ValueError("scenario offsets are not part of the "
                                     "scenario-blind model")


DEFAULT_M1 = ModelCoefficients(
    ModelKind.M1,
    smell=SenseCoefficients(-1.31, 0.03),
    visual=SenseCoefficients(84.89, -0.25),
    audio=SenseCoefficients(4.72, 0.32),
)

# scenario offsets retained only where significant: the Kitchen visual and
# both Car/Kitchen audio offsets are excluded
DEFAULT_M2 = ModelCoefficients(
    ModelKind.M2,
    smell=SenseCoefficients(-1.35, 0.04, {"Car": 0.72, "Kitchen": -1.10}),
    visual=SenseCoefficients(87.33, -0.25, {"Car": -7.29}),
    audio=SenseCoefficients(4.72, 0.32),
    scenarios=("Bathroom", "Car", "Kitchen"),
)


def default_coefficients(kind: ModelKind | str) -> ModelCoefficients:
    return DEFAULT_M1 if ModelKind(kind) is ModelKind.M1 else DEFAULT_M2


@dataclass(frozen=True)
class PredictionResult:
    smell_logit: float
    smell_prob: float
    smell_on: bool
    visual_pct: float
    audio_pct: float
    clamped: bool = False   # set when a percentage was pulled into [0, 100]


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _resolve_scenario(coeffs: ModelCoefficients,
                      scenario: Optional[str]) -> Optional[str]:
    if coeffs.model_kind is ModelKind.M1:
        if scenario is not None:
            raise ValueError("the scenario-blind model takes no scenario")
        return None
    if scenario is None:
        raise ScenarioRequiredError("the scenario-aware model needs a scenario")
    name = canonical_scenario(scenario)
    known = set(coeffs.scenarios) | {coeffs.baseline_scenario}
    for sense in (coeffs.smell, coeffs.visual, coeffs.audio):
        known |= set(sense.gamma)
    if name not in known:
        raise UnknownScenarioError(
            f"scenario {name!r} was not part of the model fit")
    return name


def predict(coeffs: ModelCoefficients, budget_regressor: float,
            scenario: Optional[str] = None) -> PredictionResult:
    """Evaluate the model at a budget regressor (see budget_regressor())."""
    name = _resolve_scenario(coeffs, scenario)
    logit = coeffs.smell.linear(budget_regressor, name)
    visual = coeffs.visual.linear(budget_regressor, name)
    audio = coeffs.audio.linear(budget_regressor, name)
    clamped = not (0.0 <= visual <= 100.0 and 0.0 <= audio <= 100.0)
    visual = min(max(visual, 0.0), 100.0)
    audio = min(max(audio, 0.0), 100.0)
    prob = _sigmoid(logit)
    return PredictionResult(smell_logit=logit, smell_prob=prob,
                            smell_on=logit > 0.0, visual_pct=visual,
                            audio_pct=audio, clamped=clamped)


def smell_decision(coeffs: ModelCoefficients, budget_regressor: float,
                   scenario: Optional[str] = None) -> bool:
    """Enable smell iff the on-odds exceed the off-odds (ties resolve off)."""
    return predict(coeffs, budget_regressor, scenario).smell_on


# --- records ------------------------------------------------------------------

@dataclass(frozen=True)
class AllocationRecord:
    budget_label: str
    budget_regressor: float
    scenario: str
    smell_on: bool
    visual_pct: float
    audio_pct: float
    weight: float = 1.0   # fractional replication weight for aggregated rows

    def __post_init__(self) -> None:
        if self.visual_pct < 0 or self.audio_pct < 0:
            raise ValueError("allocation percentages must be non-negative")
        if self.weight <= 0:
            raise ValueError("record weight must be positive")


def make_model_records(coeffs: ModelCoefficients,
                       budgets: Sequence[tuple[str, float]],
                       scenarios: Sequence[Optional[str]],
                       group_weight: float = 50.0) -> list[AllocationRecord]:
    """Noiseless records whose group statistics equal the model predictions.

    The smell outcome is expressed as an on/off pair weighted by the model
    probability, so a refit recovers the generator exactly.
    """
    out = []
    for label, b in budgets:
        for scen in scenarios:
            pred = predict(coeffs, b, scen)
            scen_name = scen if scen is not None else BASELINE_SCENARIO
            common = dict(budget_label=label, budget_regressor=b,
                          scenario=scen_name, visual_pct=pred.visual_pct,
                          audio_pct=pred.audio_pct)
            out.append(AllocationRecord(smell_on=True,
                                        weight=group_weight * pred.smell_prob,
                                        **common))
            out.append(AllocationRecord(smell_on=False,
                                        weight=group_weight * (1 - pred.smell_prob),
                                        **common))
    return out


def make_noisy_records(coeffs: ModelCoefficients,
                       budgets: Sequence[tuple[str, float]],
                       scenarios: Sequence[Optional[str]],
                       n_per_group: int, rng: np.random.Generator,
                       pct_sd: float = 5.0) -> list[AllocationRecord]:
    """Synthetic per-trial records: Gaussian percentage noise, Bernoulli smell."""
    out = []
    for label, b in budgets:
        for scen in scenarios:
            pred = predict(coeffs, b, scen)
            scen_name = scen if scen is not None else BASELINE_SCENARIO
            for _ in range(n_per_group):
                out.append(AllocationRecord(
                    budget_label=label, budget_regressor=b, scenario=scen_name,
                    smell_on=bool(rng.random() < pred.smell_prob),
                    visual_pct=max(0.0, pred.visual_pct + rng.normal(0, pct_sd)),
                    audio_pct=max(0.0, pred.audio_pct + rng.normal(0, pct_sd)),
                ))
    return out


# --- fitting ------------------------------------------------------------------

def _design_matrix(records: Sequence[AllocationRecord], kind: ModelKind,
                   baseline: str) -> tuple[np.ndarray, list[str]]:
    b = np.array([r.budget_regressor for r in records])
    cols = [np.ones(len(records)), b]
    names = ["beta_i", "beta_b"]
    if kind is ModelKind.M2:
        scenarios = sorted({r.scenario for r in records})
        for scen in scenarios:
            if scen == baseline:
                continue
            cols.append(np.array([1.0 if r.scenario == scen else 0.0
                                  for r in records]))
            names.append(f"gamma:{scen}")
    return np.column_stack(cols), names


def _wald_p(coef: float, se: float) -> float:
    if se < 1e-12:
        return 1.0 if abs(coef) < 1e-9 else 0.0
    return 2.0 * (1.0 - normal_dist.cdf(abs(coef) / se))


def _weighted_ols(X: np.ndarray, y: np.ndarray,
                  w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(coefficients, standard errors) of a weighted least-squares fit."""
    sw = np.sqrt(w)
    Xw, yw = X * sw[:, None], y * sw
    xtx = Xw.T @ Xw
    if np.linalg.matrix_rank(xtx) < X.shape[1]:
        raise CollinearError("design matrix is rank-deficient")
    coef = np.linalg.solve(xtx, Xw.T @ yw)
    resid = yw - Xw @ coef
    dof = max(w.sum() - X.shape[1], 1.0)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(xtx)
    return coef, np.sqrt(np.maximum(np.diag(cov), 0.0))


def _logistic_irls(X: np.ndarray, y: np.ndarray, w: np.ndarray,
                   tol: float = 1e-12, max_iter: int = 200
                   ) -> tuple[np.ndarray, np.ndarray]:
    """(coefficients, standard errors) of a weighted logistic regression."""
    y_eff = y * w
    beta = np.zeros(X.shape[1])
    xtwx = None
    for _ in range(max_iter):
        eta = X @ beta
        mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -500, 500)))
        W = w * mu * (1.0 - mu)
        grad = X.T @ (y_eff - w * mu)
        xtwx = X.T @ (W[:, None] * X)
        try:
            delta = np.linalg.solve(xtwx, grad)
        except np.linalg.LinAlgError:
            raise CollinearError("singular information matrix") from None
        beta = beta + delta
        if np.linalg.norm(beta) > 1e3:
            raise SeparationDetectedError(
                "logistic fit diverged (separated data)")
        if np.linalg.norm(delta) < tol:
            break
    else:
        raise SeparationDetectedError("logistic fit did not converge")
    cov = np.linalg.inv(xtwx)
    return beta, np.sqrt(np.maximum(np.diag(cov), 0.0))


def _extract(names: list[str], coef: np.ndarray) -> SenseCoefficients:
    gamma = {n.split(":", 1)[1]: float(c) for n, c in zip(names, coef)
             if n.startswith("gamma:")}
    return SenseCoefficients(float(coef[0]), float(coef[1]), gamma)


def _fit_sense(records: Sequence[AllocationRecord], y: np.ndarray,
               kind: ModelKind, baseline: str, alpha: float,
               logistic: bool) -> SenseCoefficients:
    """Fit one sense component, Wald-dropping insignificant scenario offsets."""
    w = np.array([r.weight for r in records])
    X, names = _design_matrix(records, kind, baseline)
    keep = list(range(X.shape[1]))
    while True:
        fit_fn = _logistic_irls if logistic else _weighted_ols
        coef, se = fit_fn(X[:, keep], y, w)
        kept_names = [names[i] for i in keep]
        worst_p, worst_idx = alpha, None
        for pos, name in enumerate(kept_names):
            if not name.startswith("gamma:"):
                continue
            p = _wald_p(float(coef[pos]), float(se[pos]))
            if p > worst_p:
                worst_p, worst_idx = p, pos
        if worst_idx is None:
            return _extract(kept_names, coef)
        del keep[worst_idx]


def fit(records: Sequence[AllocationRecord], kind: ModelKind | str = ModelKind.M1,
        alpha: float = 0.05, aggregate: bool = False) -> ModelCoefficients:
    """Least-squares / logistic fit of the allocation model.

    Scenario offsets (the scenario-aware model's extra terms) are tested
    against zero with Wald statistics and dropped when p > alpha, then the
    component is refit. With aggregate=True, records are first collapsed to
    weighted per-(budget, scenario) group means.
    """
    kind = ModelKind(kind)
    if aggregate:
        records = aggregate_records(records)
    if len({r.budget_regressor for r in records}) < 2:
        raise InsufficientDataError("need at least 2 distinct budget sizes")
    scenarios = sorted({r.scenario for r in records})
    if kind is ModelKind.M2 and len(scenarios) < 2:
        raise InsufficientDataError(
            "the scenario-aware model needs at least 2 scenarios")
    smell_w = np.array([r.weight for r in records])
    smell_y = np.array([1.0 if r.smell_on else 0.0 for r in records])
    on_mass = float(smell_w[smell_y > 0.5].sum())
    if on_mass <= 0 or on_mass >= float(smell_w.sum()):
        raise SeparationDetectedError("smell outcomes are all identical")
    baseline = BASELINE_SCENARIO if BASELINE_SCENARIO in scenarios else scenarios[0]
    visual_y = np.array([r.visual_pct for r in records])
    audio_y = np.array([r.audio_pct for r in records])
    return ModelCoefficients(
        model_kind=kind,
        smell=_fit_sense(records, smell_y, kind, baseline, alpha, logistic=True),
        visual=_fit_sense(records, visual_y, kind, baseline, alpha, logistic=False),
        audio=_fit_sense(records, audio_y, kind, baseline, alpha, logistic=False),
        baseline_scenario=baseline,
        scenarios=tuple(scenarios) if kind is ModelKind.M2 else (),
    )


def aggregate_records(records: Sequence[AllocationRecord]) -> list[AllocationRecord]:
    """Collapse per-trial rows into weighted per-(budget, scenario) means,
    keeping the smell outcome as a weighted on/off pair."""
    groups: dict[tuple[str, float, str], list[AllocationRecord]] = {}
    for r in records:
        groups.setdefault((r.budget_label, r.budget_regressor, r.scenario),
                          []).append(r)
    out = []
    for (label, b, scen), rows in sorted(groups.items()):
        w = np.array([r.weight for r in rows])
        total = float(w.sum())
        visual = float(np.average([r.visual_pct for r in rows], weights=w))
        audio = float(np.average([r.audio_pct for r in rows], weights=w))
        p_on = float(np.average([r.smell_on for r in rows], weights=w))
        for on, share in ((True, p_on), (False, 1.0 - p_on)):
            if share > 0:
                out.append(AllocationRecord(label, b, scen, on, visual, audio,
                                            weight=total * share))
    return out


# --- validation and summaries --------------------------------------------------

@dataclass(frozen=True)
class ValidationSummary:
    visual_mae: float          # percentage points
    audio_mae: float           # percentage points
    smell_mae: float           # mean |predicted prob - observed proportion|
    per_budget_smell_error: Mapping[str, float]
    n_groups: int


def _group_records(records: Sequence[AllocationRecord]
                   ) -> dict[tuple[str, float, str], list[AllocationRecord]]:
    groups: dict[tuple[str, float, str], list[AllocationRecord]] = {}
    for r in records:
        groups.setdefault((r.budget_label, r.budget_regressor, r.scenario),
                          []).append(r)
    return groups


def validate(coeffs: ModelCoefficients, records: Sequence[AllocationRecord],
             scenario_map: Optional[Mapping[str, str]] = None
             ) -> ValidationSummary:
    """Mean absolute error of the model against per-group observed means.

    scenario_map lets a held-out scenario borrow another scenario's
    coefficients when the model is scenario-aware.
    """
    groups = _group_records(records)
    if not groups:
        raise EmptyGroupError("no records to validate against")
    v_err, a_err, s_err = [], [], []
    per_budget: dict[str, list[float]] = {}
    for (label, b, scen), rows in sorted(groups.items()):
        scen_for_model = None
        if coeffs.model_kind is ModelKind.M2:
            scen_for_model = (scenario_map or {}).get(scen, scen)
        pred = predict(coeffs, b, scen_for_model)
        w = np.array([r.weight for r in rows])
        obs_visual = float(np.average([r.visual_pct for r in rows], weights=w))
        obs_audio = float(np.average([r.audio_pct for r in rows], weights=w))
        obs_on = float(np.average([r.smell_on for r in rows], weights=w))
        v_err.append(abs(pred.visual_pct - obs_visual))
        a_err.append(abs(pred.audio_pct - obs_audio))
        s_err.append(abs(pred.smell_prob - obs_on))
        per_budget.setdefault(label, []).append(abs(pred.smell_prob - obs_on))
    return ValidationSummary(
        visual_mae=float(np.mean(v_err)),
        audio_mae=float(np.mean(a_err)),
        smell_mae=float(np.mean(s_err)),
        per_budget_smell_error={k: float(np.mean(v))
                                for k, v in sorted(per_budget.items())},
        n_groups=len(groups),
    )


@dataclass(frozen=True)
class GroupSummary:
    budget_label: str
    budget_regressor: float
    scenario: str
    n: int
    visual_mean: float
    visual_ci_half_width: Optional[float]
    audio_mean: float
    audio_ci_half_width: Optional[float]
    smell_on_proportion: float


def summarize(records: Sequence[AllocationRecord]) -> list[GroupSummary]:
    """Per-(budget, scenario) means, 95% t-interval half-widths and smell
    proportions."""
    groups = _group_records(records)
    if not groups:
        raise EmptyGroupError("no records to summarize")
    out = []
    for (label, b, scen), rows in sorted(groups.items()):
        n = len(rows)
        visual = np.array([r.visual_pct for r in rows])
        audio = np.array([r.audio_pct for r in rows])

        def ci(values: np.ndarray) -> Optional[float]:
            if n < 2:
                return None
            sd = float(np.std(values, ddof=1))
            return float(t_dist.ppf(0.975, n - 1) * sd / math.sqrt(n))

        out.append(GroupSummary(
            budget_label=label, budget_regressor=b, scenario=scen, n=n,
            visual_mean=float(visual.mean()), visual_ci_half_width=ci(visual),
            audio_mean=float(audio.mean()), audio_ci_half_width=ci(audio),
            smell_on_proportion=float(np.mean([r.smell_on for r in rows])),
        ))
    return out


# --- serialization --------------------------------------------------------------

RECORDS_CSV_HEADER = ["budget_label", "budget_regressor", "scenario",
                      "smell_on", "visual_pct", "audio_pct", "weight"]


def write_records_csv(records: Iterable[AllocationRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORDS_CSV_HEADER)
        for r in records:
            w.writerow([r.budget_label, repr(r.budget_regressor), r.scenario,
                        int(r.smell_on), repr(r.visual_pct), repr(r.audio_pct),
                        repr(r.weight)])


def read_records_csv(path: str) -> list[AllocationRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != RECORDS_CSV_HEADER:
            raise ValueError(f"expected header {','.join(RECORDS_CSV_HEADER)}")
        out = []
        for row in reader:
            if not row:
                continue
            label, b, scen, on, visual, audio, weight = row
            out.append(AllocationRecord(label, float(b), scen, bool(int(on)),
                                        float(visual), float(audio),
                                        float(weight)))
        return out


def coefficients_to_json(coeffs: ModelCoefficients) -> str:
    def sense(s: SenseCoefficients) -> dict:
        return {"beta_i": s.beta_i, "beta_b": s.beta_b, "gamma": dict(s.gamma)}

    return json.dumps({
        "model_kind": coeffs.model_kind.value,
        "baseline_scenario": coeffs.baseline_scenario,
        "scenarios": list(coeffs.scenarios),
        "smell": sense(coeffs.smell),
        "visual": sense(coeffs.visual),
        "audio": sense(coeffs.audio),
    }, indent=2)


def coefficients_from_json(text: str) -> ModelCoefficients:
    raw = json.loads(text)

    def sense(node: dict) -> SenseCoefficients:
        return SenseCoefficients(float(node["beta_i"]), float(node["beta_b"]),
                                 {k: float(v)
                                  for k, v in node.get("gamma", {}).items()})

    return ModelCoefficients(
        model_kind=ModelKind(raw["model_kind"]),
        smell=sense(raw["smell"]), visual=sense(raw["visual"]),
        audio=sense(raw["audio"]),
        baseline_scenario=raw.get("baseline_scenario", BASELINE_SCENARIO),
        scenarios=tuple(raw.get("scenarios", ())),
    )
