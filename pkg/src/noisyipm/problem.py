"""Problem definitions, bounded-noise oracles and initial-point scaling.

A :class:`TrueProblem` holds the noiseless functions of

    min f0(x)  s.t.  cI(x) <= 0,

and a :class:`NoisyOracle` wraps one with a :class:`NoiseSpec`, serving
evaluations whose errors never exceed the configured bounds.
"""
from __future__ import annotations

import enum
import hashlib
import importlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]

# Rows/objective are scaled only when their gradient inf-norm exceeds this.
SCALE_THRESHOLD = 10.0
# Relative slack so re-scaling an already scaled problem is a no-op.
_SCALE_RTOL = 1e-12


class Keying(str, enum.Enum):
    """How noise realizations are keyed."""

    PER_ITERATION = "per_iteration"
    HASH_OF_POINT = "hash_of_point"


@dataclass(frozen=True)
class ScalingInfo:
    objective: float = 1.0
    constraints: Optional[np.ndarray] = None
    # Constraint rows whose gradient was nonfinite at x0 (left unscaled).
    flagged_rows: tuple[int, ...] = ()
    objective_flagged: bool = False


@dataclass(frozen=True)
class TrueProblem:
    """Noiseless objective and inequality constraints ``cI(x) <= 0``.

    ``eval_lagrangian_hessian(x, y)`` returns the Hessian of
    ``f0 + y^T cI``; it may be ``None``, in which case oracles serve a zero
    matrix.  ``meta`` carries reference data (known solutions, tags).
    """

    name: str
    n: int
    q: int
    x0: np.ndarray
    eval_f0: Callable[[np.ndarray], float]
    eval_g0: ArrayFn
    eval_cI: ArrayFn
    eval_JI: ArrayFn
    eval_lagrangian_hessian: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    meta: dict = field(default_factory=dict)
    scaling: ScalingInfo = field(default_factory=ScalingInfo)

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.size != self.n:
            raise ValueError(f"x0 has size {x0.size}, expected n={self.n}")
        object.__setattr__(self, "x0", x0)

    def hessian(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.eval_lagrangian_hessian is None:
            return np.zeros((self.n, self.n))
        return np.asarray(self.eval_lagrangian_hessian(x, y), dtype=float)


@dataclass(frozen=True)
class NoiseSpec:
    """Bounds on the evaluation errors, plus the RNG seed and keying mode."""

    eps_f: float = 0.0
    eps_c: float = 0.0
    eps_g: float = 0.0
    eps_J: float = 0.0
    eps_H: float = 0.0
    seed: int = 0
    keying: Keying = Keying.PER_ITERATION

    def __post_init__(self):
        for name in ("eps_f", "eps_c", "eps_g", "eps_J", "eps_H"):
            value = getattr(self, name)
            if not (value >= 0.0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        object.__setattr__(self, "keying", Keying(self.keying))

    @classmethod
    def from_level(cls, eps_f: float, seed: int = 0, eps_c: float | None = None,
                   keying: Keying = Keying.PER_ITERATION) -> "NoiseSpec":
        """Experimental convention: derivative bounds are ``sqrt(eps_f)``."""
        eps_c = eps_f if eps_c is None else eps_c
        root = math.sqrt(eps_f)
        return cls(eps_f=eps_f, eps_c=eps_c, eps_g=root, eps_J=root, eps_H=root,
                   seed=seed, keying=keying)

    @property
    def is_zero(self) -> bool:
        return not any((self.eps_f, self.eps_c, self.eps_g, self.eps_J, self.eps_H))


@dataclass
class NoisyEvaluation:
    f0: float
    cI: np.ndarray
    g0: Optional[np.ndarray] = None
    JI: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None


def sample_ball(radius: float, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Draw uniformly from the closed l2 ball of ``radius`` in R^dim.

    The direction is a normalized Gaussian and the radius is scaled by
    ``U**(1/dim)``, which gives the uniform distribution in any dimension.
    The RNG is advanced identically for every radius, including zero.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    direction = rng.standard_normal(dim)
    u = rng.random()
    if radius == 0.0:
        return np.zeros(dim)
    nrm = np.linalg.norm(direction)
    while nrm == 0.0:  # pragma: no cover - probability zero
        direction = rng.standard_normal(dim)
        nrm = np.linalg.norm(direction)
    return direction * (radius * u ** (1.0 / dim) / nrm)


class NoisyOracle:
    """Serves noisy evaluations of a :class:`TrueProblem`.

    Under ``Keying.PER_ITERATION`` a realization is a function of
    ``(seed, k, stream)``; ``stream`` separates the several evaluations made
    within one iteration (0 for the iterate, ``j + 1`` for line-search trial
    ``j``).  Under ``Keying.HASH_OF_POINT`` it is a function of ``(seed, x)``
    alone.  Objective and constraint noise are drawn first, so a partial
    (``parts="fc"``) evaluation reproduces the same ``f0``/``cI`` as a full one.
    """

    def __init__(self, problem: TrueProblem, noise: NoiseSpec | None = None):
        self.problem = problem
        self.noise = noise if noise is not None else NoiseSpec()

    @property
    def n(self) -> int:
        return self.problem.n

    @property
    def q(self) -> int:
        return self.problem.q

    def _rng(self, x: np.ndarray, k: int, stream: int) -> np.random.Generator:
        if self.noise.keying is Keying.HASH_OF_POINT:
            digest = hashlib.blake2b(np.ascontiguousarray(x).tobytes(), digest_size=16).digest()
            words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
            return np.random.default_rng([self.noise.seed, *words])
        return np.random.default_rng([self.noise.seed, k, stream])

    def evaluate(self, x, k: int = 0, *, stream: int = 0, y=None,
                 parts: str = "all") -> NoisyEvaluation:
        """Noisy evaluation at ``x``; ``parts="fc"`` skips derivatives.

        The Lagrangian Hessian is served only when multipliers ``y`` are
        given.
        """
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("evaluation point must be finite")
        if k < 0 or stream < 0:
            raise ValueError("k and stream must be nonnegative")
        p, nz = self.problem, self.noise
        rng = self._rng(x, k, stream)

        f0 = float(p.eval_f0(x))
        cI = np.array(p.eval_cI(x), dtype=float).reshape(p.q)
        ef = rng.uniform(-1.0, 1.0)
        ec = sample_ball(nz.eps_c, p.q, rng) if p.q else np.zeros(0)
        if nz.eps_f:
            f0 = f0 + nz.eps_f * ef
        if nz.eps_c:
            cI = cI + ec
        out = NoisyEvaluation(f0=f0, cI=cI)
        if parts == "fc":
            return out
        if parts != "all":
            raise ValueError(f"unknown parts {parts!r}")

        g0 = np.array(p.eval_g0(x), dtype=float).reshape(p.n)
        eg = sample_ball(nz.eps_g, p.n, rng)
        if nz.eps_g:
            g0 = g0 + eg
        JI = np.array(p.eval_JI(x), dtype=float).reshape(p.q, p.n)
        if p.q:
            row_radius = nz.eps_J / math.sqrt(p.q)
            pattern = JI != 0.0
            for i in range(p.q):
                cols = np.flatnonzero(pattern[i])
                if cols.size == 0:
                    continue
                draw = sample_ball(row_radius, cols.size, rng)
                if nz.eps_J:
                    JI[i, cols] += draw
        out.g0, out.JI = g0, JI
        if y is not None:
            H = p.hessian(x, np.asarray(y, dtype=float))
            H = 0.5 * (H + H.T)
            eh = rng.uniform(-1.0, 1.0, size=p.n)
            if nz.eps_H:
                H = H + np.diag(nz.eps_H * eh)
            out.H = H
        return out

    def evaluate_true(self, x, y=None) -> NoisyEvaluation:
        """Noiseless values; for harness diagnostics only."""
        x = np.asarray(x, dtype=float)
        p = self.problem
        out = NoisyEvaluation(
            f0=float(p.eval_f0(x)),
            cI=np.array(p.eval_cI(x), dtype=float).reshape(p.q),
            g0=np.array(p.eval_g0(x), dtype=float).reshape(p.n),
            JI=np.array(p.eval_JI(x), dtype=float).reshape(p.q, p.n),
        )
        if y is not None:
            out.H = p.hessian(x, np.asarray(y, dtype=float))
        return out


def evaluate_noisy(oracle: NoisyOracle, x, k: int, **kwargs) -> NoisyEvaluation:
    return oracle.evaluate(x, k, **kwargs)


def _factor(norm_inf: float) -> tuple[float, bool]:
    if not math.isfinite(norm_inf):
        return 1.0, True
    if norm_inf > SCALE_THRESHOLD * (1.0 + _SCALE_RTOL):
        return SCALE_THRESHOLD / norm_inf, False
    return 1.0, False


def scale_problem(problem: TrueProblem) -> TrueProblem:
    """Scale objective and constraint rows by their gradient size at ``x0``.

    Any function whose gradient inf-norm at ``x0`` exceeds 10 is multiplied
    by ``10 / norm``.  The factors of this application are recorded in the
    returned problem's ``scaling``; a nonfinite gradient leaves that function
    unscaled and flagged.
    """
    x0 = problem.x0
    with np.errstate(all="ignore"):
        g = np.asarray(problem.eval_g0(x0), dtype=float)
        J = np.asarray(problem.eval_JI(x0), dtype=float).reshape(problem.q, problem.n)
        obj, obj_flag = _factor(float(np.max(np.abs(g))) if g.size else 0.0)
        rows = np.ones(problem.q)
        flagged = []
        for i in range(problem.q):
            rows[i], bad = _factor(float(np.max(np.abs(J[i]))) if problem.n else 0.0)
            if bad:
                flagged.append(i)

    f0, g0, cI, JI, hess = (problem.eval_f0, problem.eval_g0, problem.eval_cI,
                            problem.eval_JI, problem.eval_lagrangian_hessian)
    scaled_hess = None
    if hess is not None:
        def scaled_hess(x, y):
            # of * (H_f + sum_i (r_i y_i / of) H_ci)
            return obj * np.asarray(hess(x, rows * np.asarray(y) / obj))

    return replace(
        problem,
        eval_f0=lambda x: obj * f0(x),
        eval_g0=lambda x: obj * np.asarray(g0(x)),
        eval_cI=lambda x: rows * np.asarray(cI(x)),
        eval_JI=lambda x: rows[:, None] * np.asarray(JI(x)).reshape(problem.q, problem.n),
        eval_lagrangian_hessian=scaled_hess,
        scaling=ScalingInfo(objective=obj, constraints=rows, flagged_rows=tuple(flagged),
                            objective_flagged=obj_flag),
    )


# ---------------------------------------------------------------- registry

_REGISTRY: dict[str, Callable[[], TrueProblem]] = {}


def register(name: str):
    """Decorator registering a zero-argument problem factory under ``name``."""
    def deco(factory):
        if name in _REGISTRY:
            raise ValueError(f"problem {name!r} already registered")
        _REGISTRY[name] = factory
        return factory
    return deco


def _ensure_suite():
    importlib.import_module("noisyipm.harness.suite")


def get_problem(name: str) -> TrueProblem:
    _ensure_suite()
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(_REGISTRY)}") from None


def problem_names() -> list[str]:
    _ensure_suite()
    return list(_REGISTRY)


def load_problem_config(config) -> NoisyOracle:
    """Build an oracle from a JSON configuration (path, JSON text or dict).

    Format::

        {"problem": "hs35",
         "noise": {"eps_f": 1e-2, "eps_c": 1e-2, "eps_g": 0.1, "eps_J": 0.1,
                   "eps_H": 0.1, "seed": 0, "keying": "per_iteration"},
         "scale": true}

    ``noise`` may instead be ``{"level": 1e-2, "seed": 0}`` for the
    ``sqrt(eps_f)`` derivative convention.  ``scale`` defaults to true.
    """
    if isinstance(config, (str, Path)):
        text = str(config)
        config = json.loads(text) if text.lstrip().startswith("{") else json.loads(Path(text).read_text())
    problem = get_problem(config["problem"])
    if config.get("scale", True):
        problem = scale_problem(problem)
    noise_cfg = dict(config.get("noise", {}))
    if "level" in noise_cfg:
        level = noise_cfg.pop("level")
        noise = NoiseSpec.from_level(level, **noise_cfg)
    else:
        noise = NoiseSpec(**noise_cfg)
    return NoisyOracle(problem, noise)
