"""Declarative model specification and the scenario file format.

A :class:`Scenario` fixes everything the solvers need: the discrete
personality masses, the interaction kernel, stubbornness, prejudice, the
subject-coupling matrix, the noise variance and the initial opinion laws.
Continuous personality distributions are handled by midpoint discretization
(:func:`discretize_personality`); :func:`build_preset` provides the stock
configurations used throughout the numerical experiments.

Scenario files are strict UTF-8 JSON documents; unknown keys are rejected.
Serialization is canonical, so serialize -> parse -> serialize round-trips
bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import ValidationError
from .linalg import spectrum

_SCENARIO_KEYS = {"subjects", "personalities", "coupling", "stubbornness",
                  "prejudice", "interaction", "noise_variance", "initial"}


def _array(value, name: str, shape=None) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name}: not a numeric array ({exc})") from None
    if shape is not None and arr.shape != shape:
        raise ValidationError(f"{name}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: entries must be finite")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# interaction kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InteractionKernel:
    """Mutual-influence strength between personalities.

    Variants: ``proximity`` (1 / (1 + |p-q|^2)), ``community`` (zeta1 within
    a sign community, -zeta2 across), ``table`` (explicit M x M values) and
    ``product`` (zeta1(p) * zeta2(q) from per-personality samples).
    """

    variant: str
    zeta1: float | None = None
    zeta2: float | None = None
    values: np.ndarray | None = None
    samples1: np.ndarray | None = None
    samples2: np.ndarray | None = None

    @classmethod
    def proximity(cls) -> "InteractionKernel":
        return cls("proximity")

    @classmethod
    def community(cls, zeta1: float, zeta2: float) -> "InteractionKernel":
        for name, val in (("zeta1", zeta1), ("zeta2", zeta2)):
            if not math.isfinite(val):
                raise ValidationError(f"interaction.params.{name}: must be finite")
        return cls("community", zeta1=float(zeta1), zeta2=float(zeta2))

    @classmethod
    def table(cls, values) -> "InteractionKernel":
        arr = _array(values, "interaction.params.values")
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"interaction.params.values: expected a square table, got {arr.shape}")
        return cls("table", values=_frozen(arr))

    @classmethod
    def product(cls, samples1, samples2) -> "InteractionKernel":
        s1 = _array(samples1, "interaction.params.zeta1")
        s2 = _array(samples2, "interaction.params.zeta2")
        if s1.ndim != 1 or s2.shape != s1.shape:
            raise ValidationError("interaction.params: zeta1 and zeta2 samples must be equal-length vectors")
        return cls("product", samples1=_frozen(s1), samples2=_frozen(s2))

    def table_for(self, personalities: np.ndarray) -> np.ndarray:
        """M x M matrix of zeta(p_i, p_j) for the given personality values."""
        p = np.asarray(personalities, dtype=float)
        m = p.size
        if self.variant == "proximity":
            diff = p[:, None] - p[None, :]
            return 1.0 / (1.0 + diff * diff)
        if self.variant == "community":
            same = (p[:, None] >= 0.0) == (p[None, :] >= 0.0)
            return np.where(same, self.zeta1, -self.zeta2)
        if self.variant == "table":
            if self.values.shape != (m, m):
                raise ValidationError(
                    f"interaction.params.values: table is {self.values.shape}, scenario has {m} personalities")
            return self.values.copy()
        if self.variant == "product":
            if self.samples1.shape != (m,):
                raise ValidationError(
                    f"interaction.params: {self.samples1.size} kernel samples for {m} personalities")
            return np.outer(self.samples1, self.samples2)
        raise ValidationError(f"interaction.variant: unknown variant {self.variant!r}")


# ---------------------------------------------------------------------------
# initial opinion laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InitialLaw:
    """Initial opinion distribution for one personality: Dirac or Gaussian."""

    variant: str
    mean: np.ndarray
    cov: np.ndarray | None = None

    @classmethod
    def dirac(cls, x0) -> "InitialLaw":
        return cls("dirac", _frozen(_array(x0, "initial.params.x0")))

    @classmethod
    def gaussian(cls, mean, cov) -> "InitialLaw":
        mean_arr = _array(mean, "initial.params.mean")
        cov_arr = _array(cov, "initial.params.cov", (mean_arr.size, mean_arr.size))
        if np.abs(cov_arr - cov_arr.T).max() > 1e-12:
            raise ValidationError("initial.params.cov: must be symmetric")
        if spectrum(cov_arr).min_real_part < -1e-10:
            raise ValidationError("initial.params.cov: must be positive semidefinite")
        return cls("gaussian", _frozen(mean_arr), _frozen(cov_arr))


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scenario:
    """Complete model specification over M personality masses and N subjects."""

    subjects: int
    personalities: np.ndarray          # (M,) personality values
    masses: np.ndarray                 # (M,) probability masses, sum to 1
    coupling: np.ndarray               # (N, N)
    stubbornness: np.ndarray           # (M,) alpha(p_i) in (0, 1]
    prejudice: np.ndarray              # (M, N)
    interaction: InteractionKernel
    noise_variance: float
    initial: tuple[InitialLaw, ...]    # length M

    def __post_init__(self):
        n = self.subjects
        if not isinstance(n, int) or n < 1:
            raise ValidationError(f"subjects: must be a positive integer, got {self.subjects!r}")
        p = _array(self.personalities, "personalities")
        if p.ndim != 1 or p.size < 1:
            raise ValidationError("personalities: need at least one personality mass")
        if np.unique(p).size != p.size:
            raise ValidationError("personalities: values must be distinct")
        m = p.size
        r = _array(self.masses, "personalities", (m,))
        if np.any(r <= 0.0):
            raise ValidationError("personalities: masses r must be positive")
        if abs(float(r.sum()) - 1.0) > 1e-12:
            raise ValidationError(f"personalities: masses must sum to 1 (got {float(r.sum()):.17g})")
        coupling = _array(self.coupling, "coupling", (n, n))
        alpha = _array(self.stubbornness, "stubbornness", (m,))
        if np.any(alpha <= 0.0) or np.any(alpha > 1.0):
            raise ValidationError("stubbornness: alpha must lie in (0, 1]")
        prejudice = _array(self.prejudice, "prejudice", (m, n))
        if not isinstance(self.noise_variance, (int, float)) or isinstance(self.noise_variance, bool):
            raise ValidationError("noise_variance: must be a number")
        if not math.isfinite(self.noise_variance) or self.noise_variance < 0.0:
            raise ValidationError(f"noise_variance: must be finite and >= 0, got {self.noise_variance!r}")
        if len(self.initial) != m:
            raise ValidationError(f"initial: {len(self.initial)} laws for {m} personalities")
        for law in self.initial:
            if law.mean.shape != (n,):
                raise ValidationError(f"initial: law dimension {law.mean.shape} does not match {n} subjects")
        table = self.interaction.table_for(p)
        if not np.all(np.isfinite(table)):
            raise ValidationError("interaction: kernel evaluates to non-finite values")
        object.__setattr__(self, "personalities", _frozen(p))
        object.__setattr__(self, "masses", _frozen(r))
        object.__setattr__(self, "coupling", _frozen(coupling))
        object.__setattr__(self, "stubbornness", _frozen(alpha))
        object.__setattr__(self, "prejudice", _frozen(prejudice))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        object.__setattr__(self, "initial", tuple(self.initial))

    @property
    def personality_count(self) -> int:
        return self.personalities.size

    def kernel_table(self) -> np.ndarray:
        return self.interaction.table_for(self.personalities)


# ---------------------------------------------------------------------------
# continuous specification and discretization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ContinuousModel:
    """Continuous-personality specification, solved by discretization only."""

    subjects: int
    coupling: np.ndarray
    noise_variance: float
    density: Callable[[float], float]
    kernel: Callable[[float, float], float]
    stubbornness: Callable[[float], float]
    prejudice: Callable[[float], np.ndarray]
    initial: Callable[[float], InitialLaw]
    domain: tuple[float, float] = (-1.0, 1.0)


# 5-point Gauss-Legendre nodes/weights on [-1, 1], used per mesh cell
_GL_NODES = np.array([-0.9061798459386640, -0.5384693101056831, 0.0,
                      0.5384693101056831, 0.9061798459386640])
_GL_WEIGHTS = np.array([0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                        0.4786286704993665, 0.2369268850561891])


def discretize_personality(model: ContinuousModel, n: int) -> Scenario:
    """Discretize a continuous personality density onto n equal-width cells.

    Cell masses are the integrals of the density over each cell; the kernel,
    prejudice, stubbornness and initial law are sampled at cell midpoints.
    """
    if n < 2:
        raise ValidationError(f"mesh count n must be >= 2, got {n}")
    lo, hi = model.domain
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise ValidationError(f"personality domain {model.domain} is not a finite interval")
    edges = np.linspace(lo, hi, n + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    masses = np.empty(n)
    for i, c in enumerate(mids):
        nodes = c + half * _GL_NODES
        masses[i] = half * float(np.dot(_GL_WEIGHTS, [model.density(x) for x in nodes]))
    total = float(masses.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(
            f"personality density must integrate to 1 over {model.domain} (got {total:.8g})")
    masses = masses / total
    table = np.array([[model.kernel(pi, pj) for pj in mids] for pi in mids])
    return Scenario(
        subjects=model.subjects,
        personalities=mids,
        masses=masses,
        coupling=np.asarray(model.coupling, dtype=float),
        stubbornness=np.array([model.stubbornness(p) for p in mids]),
        prejudice=np.array([model.prejudice(p) for p in mids]),
        interaction=InteractionKernel.table(table),
        noise_variance=model.noise_variance,
        initial=tuple(model.initial(p) for p in mids),
    )


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def _midpoint_mesh(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoints and masses of the uniform personality mesh on [-1, 1]."""
    i = np.arange(1, n + 1)
    return (2.0 * i - 1.0) / n - 1.0, np.full(n, 1.0 / n)


def _sign_prejudice(personalities: np.ndarray, negative, nonnegative) -> np.ndarray:
    return np.array([negative if p < 0 else nonnegative for p in personalities], dtype=float)


def _check_override(params: dict, allowed: dict[str, tuple[float, float, bool, bool]]) -> dict:
    merged = {}
    for key, (default, low, high, low_open) in allowed.items():
        val = params.pop(key, default)
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ValidationError(f"{key}: must be a finite number, got {val!r}")
        if (val <= low if low_open else val < low) or val > high:
            bracket = "(" if low_open else "["
            raise ValidationError(f"{key}: must lie in {bracket}{low}, {high}], got {val}")
        merged[key] = float(val)
    if params:
        raise ValidationError(f"unknown preset parameter(s): {', '.join(sorted(params))}")
    return merged


_INF = float("inf")


def _count_param(params: dict, key: str, default: int, even: bool = False) -> int:
    val = params.pop(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)) or int(val) != val or val < 2:
        raise ValidationError(f"{key}: must be an integer >= 2, got {val!r}")
    val = int(val)
    if even and val % 2:
        raise ValidationError(f"{key}: must be even, got {val}")
    return val


def _proximity_preset(prejudice_axis: int, params: dict) -> Scenario:
    n = _count_param(params, "n", 50)
    opts = _check_override(params, {
        "sigma2": (1e-3, 0.0, _INF, False),
        "alpha": (0.01, 0.0, 1.0, True),
        "rho": (0.3, -_INF, _INF, False),
        "epsilon": (1e-10, -_INF, _INF, False),
    })
    p, r = _midpoint_mesh(n)
    u_neg = [0.0, 0.0]
    u_pos = [0.0, 0.0]
    u_neg[prejudice_axis], u_pos[prejudice_axis] = -1.0, 1.0
    return Scenario(
        subjects=2,
        personalities=p,
        masses=r,
        coupling=np.array([[1.0, opts["rho"]], [opts["epsilon"], 1.0]]),
        stubbornness=np.full(n, opts["alpha"]),
        prejudice=_sign_prejudice(p, u_neg, u_pos),
        interaction=InteractionKernel.proximity(),
        noise_variance=opts["sigma2"],
        initial=tuple(InitialLaw.dirac([0.0, 0.0]) for _ in range(n)),
    )


def _community_preset(params: dict) -> Scenario:
    m = _count_param(params, "M", 2, even=True)
    opts = _check_override(params, {
        "sigma2": (1e-3, 0.0, _INF, False),
        "alpha": (0.01, 0.0, 1.0, True),
        "zeta1": (1.0, -_INF, _INF, False),
        "zeta2": (0.004, -_INF, _INF, False),
        "rho": (1.0, -_INF, _INF, False),
        "epsilon": (1e-10, -_INF, _INF, False),
    })
    p, r = _midpoint_mesh(m)
    return Scenario(
        subjects=2,
        personalities=p,
        masses=r,
        coupling=np.array([[1.0, opts["rho"]], [opts["epsilon"], 1.0]]),
        stubbornness=np.full(m, opts["alpha"]),
        prejudice=_sign_prejudice(p, [0.0, -1.0], [0.0, 1.0]),
        interaction=InteractionKernel.community(opts["zeta1"], opts["zeta2"]),
        noise_variance=opts["sigma2"],
        initial=tuple(InitialLaw.dirac([0.0, 0.0]) for _ in range(m)),
    )


def _community_scalar_preset(params: dict) -> Scenario:
    m = _count_param(params, "M", 2, even=True)
    opts = _check_override(params, {
        "sigma2": (1e-3, 0.0, _INF, False),
        "alpha": (0.01, 0.0, 1.0, True),
        "zeta1": (1.0, -_INF, _INF, False),
        "zeta2": (0.004, -_INF, _INF, False),
    })
    p, r = _midpoint_mesh(m)
    return Scenario(
        subjects=1,
        personalities=p,
        masses=r,
        coupling=np.array([[1.0]]),
        stubbornness=np.full(m, opts["alpha"]),
        prejudice=_sign_prejudice(p, [-1.0], [1.0]),
        interaction=InteractionKernel.community(opts["zeta1"], opts["zeta2"]),
        noise_variance=opts["sigma2"],
        initial=tuple(InitialLaw.dirac([0.0]) for _ in range(m)),
    )


def _rotational_preset(params: dict) -> Scenario:
    m = _count_param(params, "M", 2, even=True)
    opts = _check_override(params, {
        "sigma2": (1e-3, 0.0, _INF, False),
        "alpha": (0.01, 0.0, 1.0, True),
        "zeta1": (1.0, -_INF, _INF, False),
        "zeta2": (-0.1, -_INF, _INF, False),
    })
    p, r = _midpoint_mesh(m)
    return Scenario(
        subjects=2,
        personalities=p,
        masses=r,
        coupling=np.array([[0.0, 1.0], [-1.0, 0.0]]),
        stubbornness=np.full(m, opts["alpha"]),
        prejudice=_sign_prejudice(p, [0.0, -10.0], [0.0, 10.0]),
        interaction=InteractionKernel.community(opts["zeta1"], opts["zeta2"]),
        noise_variance=opts["sigma2"],
        initial=tuple(InitialLaw.dirac([0.0, 0.0]) for _ in range(m)),
    )


PRESETS: dict[str, str] = {
    "noise-sweep": "proximity kernel, asymmetric coupling, prejudice split on subject 1; vary sigma2",
    "correlation-sweep": "proximity kernel, prejudice split on subject 2; vary the coupling entry rho",
    "community": "two sign communities on two coupled subjects; vary zeta2 for the stability regimes",
    "community-scalar": "two sign communities on a single subject (closed-form spectrum available)",
    "rotational": "two communities with a skew coupling matrix; covariance grows linearly in time",
}


def build_preset(name: str, **params) -> Scenario:
    """Build one of the stock scenarios, applying keyword overrides."""
    if name == "noise-sweep":
        return _proximity_preset(0, params)
    if name == "correlation-sweep":
        return _proximity_preset(1, params)
    if name == "community":
        return _community_preset(params)
    if name == "community-scalar":
        return _community_scalar_preset(params)
    if name == "rotational":
        return _rotational_preset(params)
    raise ValidationError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")


def with_initial(scn: Scenario, laws) -> Scenario:
    """Copy of the scenario with the initial opinion laws replaced."""
    return replace(scn, initial=tuple(laws))


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def to_dict(scn: Scenario) -> dict:
    interaction: dict = {"variant": scn.interaction.variant, "params": {}}
    if scn.interaction.variant == "community":
        interaction["params"] = {"zeta1": scn.interaction.zeta1, "zeta2": scn.interaction.zeta2}
    elif scn.interaction.variant == "table":
        interaction["params"] = {"values": scn.interaction.values.tolist()}
    elif scn.interaction.variant == "product":
        interaction["params"] = {"zeta1": scn.interaction.samples1.tolist(),
                                 "zeta2": scn.interaction.samples2.tolist()}
    variants = {law.variant for law in scn.initial}
    if len(variants) != 1:
        raise ValidationError("initial: the file format stores one variant for all personalities")
    variant = variants.pop()
    if variant == "dirac":
        initial = {"variant": "dirac", "params": {"x0": [law.mean.tolist() for law in scn.initial]}}
    else:
        initial = {"variant": "gaussian",
                   "params": {"mean": [law.mean.tolist() for law in scn.initial],
                              "cov": [law.cov.tolist() for law in scn.initial]}}
    return {
        "subjects": scn.subjects,
        "personalities": [{"p": float(p), "r": float(r)}
                          for p, r in zip(scn.personalities, scn.masses)],
        "coupling": scn.coupling.tolist(),
        "stubbornness": scn.stubbornness.tolist(),
        "prejudice": scn.prejudice.tolist(),
        "interaction": interaction,
        "noise_variance": scn.noise_variance,
        "initial": initial,
    }


def to_json(scn: Scenario) -> str:
    return json.dumps(to_dict(scn), indent=2, sort_keys=True) + "\n"


def _require_keys(obj: dict, required: set, context: str, optional: set = frozenset()):
    if not isinstance(obj, dict):
        raise ValidationError(f"{context}: expected an object")
    unknown = set(obj) - required - optional
    if unknown:
        raise ValidationError(f"{context}: unknown key(s) {', '.join(sorted(unknown))}")
    missing = required - set(obj)
    if missing:
        raise ValidationError(f"{context}: missing key(s) {', '.join(sorted(missing))}")


def _parse_interaction(obj: dict) -> InteractionKernel:
    _require_keys(obj, {"variant", "params"}, "interaction")
    variant, params = obj["variant"], obj["params"]
    if not isinstance(params, dict):
        raise ValidationError("interaction.params: expected an object")
    if variant == "proximity":
        _require_keys(params, set(), "interaction.params")
        return InteractionKernel.proximity()
    if variant == "community":
        _require_keys(params, {"zeta1", "zeta2"}, "interaction.params")
        return InteractionKernel.community(params["zeta1"], params["zeta2"])
    if variant == "table":
        _require_keys(params, {"values"}, "interaction.params")
        return InteractionKernel.table(params["values"])
    if variant == "product":
        _require_keys(params, {"zeta1", "zeta2"}, "interaction.params")
        return InteractionKernel.product(params["zeta1"], params["zeta2"])
    raise ValidationError(f"interaction.variant: unknown variant {variant!r}")


def _per_personality(value, m: int, n: int, name: str) -> list[np.ndarray]:
    arr = _array(value, name)
    if arr.ndim == 1:
        if arr.shape != (n,):
            raise ValidationError(f"{name}: expected {n} components, got {arr.shape}")
        return [arr] * m
    if arr.shape != (m, n):
        raise ValidationError(f"{name}: expected shape ({m}, {n}) or ({n},), got {arr.shape}")
    return list(arr)


def _parse_initial(obj: dict, m: int, n: int) -> tuple[InitialLaw, ...]:
    _require_keys(obj, {"variant", "params"}, "initial")
    variant, params = obj["variant"], obj["params"]
    if not isinstance(params, dict):
        raise ValidationError("initial.params: expected an object")
    if variant == "dirac":
        _require_keys(params, {"x0"}, "initial.params")
        return tuple(InitialLaw.dirac(x) for x in _per_personality(params["x0"], m, n, "initial.params.x0"))
    if variant == "gaussian":
        _require_keys(params, {"mean", "cov"}, "initial.params")
        means = _per_personality(params["mean"], m, n, "initial.params.mean")
        cov = _array(params["cov"], "initial.params.cov")
        if cov.ndim == 2:
            covs = [cov] * m
        elif cov.shape == (m, n, n):
            covs = list(cov)
        else:
            raise ValidationError(f"initial.params.cov: expected shape ({n}, {n}) or ({m}, {n}, {n})")
        return tuple(InitialLaw.gaussian(mu, sig) for mu, sig in zip(means, covs))
    raise ValidationError(f"initial.variant: unknown variant {variant!r}")


def from_dict(doc: dict) -> Scenario:
    _require_keys(doc, _SCENARIO_KEYS, "scenario")
    n = doc["subjects"]
    if isinstance(n, bool) or not isinstance(n, int):
        raise ValidationError(f"subjects: must be an integer, got {n!r}")
    if not isinstance(doc["personalities"], list) or not doc["personalities"]:
        raise ValidationError("personalities: expected a non-empty array of {p, r} objects")
    ps, rs = [], []
    for k, entry in enumerate(doc["personalities"]):
        _require_keys(entry, {"p", "r"}, f"personalities[{k}]")
        ps.append(entry["p"])
        rs.append(entry["r"])
    m = len(ps)
    stub = doc["stubbornness"]
    if isinstance(stub, (int, float)) and not isinstance(stub, bool):
        stubbornness = np.full(m, float(stub))
    else:
        stubbornness = _array(stub, "stubbornness")
    return Scenario(
        subjects=n,
        personalities=np.array(ps, dtype=float),
        masses=np.array(rs, dtype=float),
        coupling=_array(doc["coupling"], "coupling"),
        stubbornness=stubbornness,
        prejudice=_array(doc["prejudice"], "prejudice"),
        interaction=_parse_interaction(doc["interaction"]),
        noise_variance=doc["noise_variance"],
        initial=_parse_initial(doc["initial"], m, n),
    )


def from_json(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario file is not valid JSON: {exc}") from None
    return from_dict(doc)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return from_json(fh.read())


def save_scenario(scn: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(scn))


def digest(scn: Scenario) -> str:
    """Content hash of the canonical serialization."""
    return hashlib.sha256(to_json(scn).encode("utf-8")).hexdigest()
