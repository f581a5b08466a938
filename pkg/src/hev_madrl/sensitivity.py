"""Hyperparameter sweeps and the importance ranking built on them.

A sweep trains one group per hyperparameter setting and records three
indicators: computation time (CT, s), convergence episodes (CE) and fuel
economy (FE, L/100 km). Settings within a dimension are projected onto
their first principal component; the sensitivity level then compares the
best and worst groups of each indicator.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.decomposition import PCA
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DegenerateCovariance, HevError, IdenticalSettings

INDICATORS = ("CT", "CE", "FE")


# ---------------------------------------------------------------------------
# projection and sensitivity level


class SettingProjector(TransformerMixin, BaseEstimator):
    """Standardize setting vectors and score them on the first principal component.

    The component's sign is fixed so its largest-magnitude loading is
    positive, which makes scores reproducible across solvers.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if X.shape[0] < 2:
            raise DegenerateCovariance("need at least two settings")
        self.scaler_ = StandardScaler().fit(X)
        Z = self.scaler_.transform(X)
        if not np.any(Z):
            raise DegenerateCovariance("all settings are identical")
        pca = PCA(n_components=1, svd_solver="full").fit(Z)
        comp = pca.components_[0]
        if comp[np.argmax(np.abs(comp))] < 0:
            comp = -comp
        self.component_ = comp
        self.mean_ = pca.mean_
        self.explained_variance_ratio_ = float(pca.explained_variance_ratio_[0])
        return self

    def transform(self, X):
        check_is_fitted(self, "component_")
        X = check_array(X, dtype=float)
        return ((self.scaler_.transform(X) - self.mean_) @ self.component_)[:, None]


def pca_project(settings) -> np.ndarray:
    """First-principal-component scores of standardized settings, one per row."""
    return SettingProjector().fit_transform(settings)[:, 0]


def sensitivity_level(y_best: float, y_worst: float, x_best, x_worst) -> float:
    """``|y_b - y_w| * ||x_b|| / (y_b * ||x_b - x_w||) * 100``."""
    xb = np.atleast_1d(np.asarray(x_best, dtype=float))
    xw = np.atleast_1d(np.asarray(x_worst, dtype=float))
    gap = float(np.linalg.norm(xb - xw))
    if gap == 0.0:
        raise IdenticalSettings("best and worst settings coincide")
    if y_best == 0:
        raise ValueError("y_best must be non-zero")
    return abs(y_best - y_worst) * float(np.linalg.norm(xb)) / (y_best * gap) * 100.0


def convergence_episode(rewards, window: int = 10, band: float = 0.02) -> int:
    """First episode (1-based, counted at the window's end) whose moving-average
    reward lies within ``band`` of the final moving average."""
    r = np.asarray(rewards, dtype=float)
    if len(r) < window:
        raise ValueError(f"need at least {window} episodes, got {len(r)}")
    ma = np.convolve(r, np.ones(window) / window, mode="valid")
    final = ma[-1]
    tol = band * abs(final)
    hits = np.nonzero(np.abs(ma - final) <= tol)[0]
    return int(hits[0]) + window


# ---------------------------------------------------------------------------
# groups and sweep logs


@dataclass(frozen=True)
class SweepGroup:
    label: str
    dimension: str
    overrides: dict            # AgentConfig fields
    setting: tuple             # numeric setting vector used for the projection


def critic_depth_groups() -> list[SweepGroup]:
    return [SweepGroup(f"1.{k - 1}", "CriticDepth", {"critic_layers": k, "actor_layers": 3}, (float(k),))
            for k in range(2, 8)]


LEARNING_RATE_PAIRS = {"2.1": (1e-4, 1e-4), "2.2": (1e-3, 1e-3), "2.3": (1e-4, 1e-3),
                       "2.4": (1e-3, 1e-4), "2.5": (1e-5, 1e-5)}


def learning_rate_groups() -> list[SweepGroup]:
    # settings in log10 so each decade counts the same
    return [SweepGroup(label, "LearningRates", {"actor_lr": a, "critic_lr": c},
                       (math.log10(a), math.log10(c)))
            for label, (a, c) in LEARNING_RATE_PAIRS.items()]


# (decay rate, diffusion) per group
POLICY_NOISE = {"3.1": (0.2, 1e-4), "3.2": (0.5, 1e-4), "3.3": (0.2, 1e-3)}


def policy_noise_groups() -> list[SweepGroup]:
    return [SweepGroup(label, "PolicyNoise", {"ou_decay": d, "ou_sigma": s}, (d, math.log10(s)))
            for label, (d, s) in POLICY_NOISE.items()]


DIMENSIONS = {
    "CriticDepth": critic_depth_groups,
    "LearningRates": learning_rate_groups,
    "PolicyNoise": policy_noise_groups,
}


@dataclass
class GroupResult:
    label: str
    dimension: str
    setting: tuple
    seeds: list
    ct: float | None          # mean wall-clock seconds per seed
    ce: float | None          # mean convergence episode
    fe: float | None          # mean evaluation L/100 km
    converged: bool = True
    error: str | None = None

    def indicator(self, name: str):
        return {"CT": self.ct, "CE": self.ce, "FE": self.fe}[name]


@dataclass
class SweepLog:
    groups: list = field(default_factory=list)
    host: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"host": self.host, "groups": [asdict(g) for g in self.groups]},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SweepLog":
        data = json.loads(text)
        groups = [GroupResult(**{**g, "setting": tuple(g["setting"])}) for g in data["groups"]]
        return cls(groups, data.get("host", {}))

    def write(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def read(cls, path) -> "SweepLog":
        return cls.from_json(Path(path).read_text())


def run_sweep(groups, train_fn, seeds=(0,), clock=time.perf_counter, host=None) -> SweepLog:
    """Train every group under every seed.

    ``train_fn(overrides, seed)`` returns ``(episode_rewards, fuel_l_per_100km)``.
    A group whose training raises a package error is kept in the log as
    non-convergent.
    """
    log = SweepLog(host=dict(host or {}))
    for g in groups:
        cts, ces, fes = [], [], []
        try:
            for seed in seeds:
                t0 = clock()
                rewards, fuel = train_fn(dict(g.overrides), seed)
                cts.append(clock() - t0)
                ces.append(convergence_episode(rewards))
                fes.append(fuel)
        except HevError as exc:
            log.groups.append(GroupResult(g.label, g.dimension, tuple(g.setting), list(seeds),
                                          None, None, None, False, f"{type(exc).__name__}: {exc}"))
            continue
        log.groups.append(GroupResult(g.label, g.dimension, tuple(g.setting), list(seeds),
                                      float(np.mean(cts)), float(np.mean(ces)), float(np.mean(fes))))
    return log


# ---------------------------------------------------------------------------
# report


@dataclass
class IndicatorSummary:
    indicator: str
    best: str
    worst: str
    y_best: float
    y_worst: float
    level: float | None   # None when best and worst coincide


def summarize_dimension(groups) -> list[IndicatorSummary]:
    """Best/worst group and sensitivity level per indicator (lower is better for all three)."""
    ok = [g for g in groups if g.converged]
    if len(ok) < 2:
        return []
    if len({tuple(g.setting) for g in ok}) == 1:
        raise IdenticalSettings(f"all groups of {ok[0].dimension} share one setting")
    scores = dict(zip((g.label for g in ok), pca_project([g.setting for g in ok])))
    out = []
    for name in INDICATORS:
        ranked = sorted(ok, key=lambda g: (g.indicator(name), g.label))
        b, w = ranked[0], ranked[-1]
        if b.indicator(name) == w.indicator(name):
            level = None
        else:
            level = sensitivity_level(b.indicator(name), w.indicator(name), scores[b.label], scores[w.label])
        out.append(IndicatorSummary(name, b.label, w.label, b.indicator(name), w.indicator(name), level))
    return out


def sensitivity_report(log: SweepLog) -> str:
    """Tab-separated importance table and ranking; a pure function of the log."""
    dims = sorted({g.dimension for g in log.groups})
    lines = ["dimension\tindicator\tbest_group\tbest\tworst_group\tworst\tL_s_percent"]
    ranking = []
    for d in dims:
        summaries = summarize_dimension([g for g in log.groups if g.dimension == d])
        for s in summaries:
            level = "NA" if s.level is None else f"{s.level:.6g}"
            lines.append(f"{d}\t{s.indicator}\t{s.best}\t{s.y_best:.6g}\t{s.worst}\t{s.y_worst:.6g}\t{level}")
        levels = [s.level for s in summaries if s.level is not None]
        if levels:
            ranking.append((max(levels), d))
    failed = [g.label for g in log.groups if not g.converged]
    lines.append("")
    lines.append("ranking\tdimension\tmax_L_s_percent")
    for i, (lv, d) in enumerate(sorted(ranking, key=lambda t: (-t[0], t[1])), 1):
        lines.append(f"{i}\t{d}\t{lv:.6g}")
    if failed:
        lines.append("")
        lines.append("non_convergent\t" + ",".join(failed))
    return "\n".join(lines) + "\n"
