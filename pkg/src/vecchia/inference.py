"""Maximum Vecchia-likelihood estimation with an increasing neighbor schedule.

Each stage fixes a neighbor count m, rebuilds the conditioning sets (and
blocks), and maximizes the log-likelihood over log-transformed covariance
parameters with Nelder-Mead, starting from the previous stage's estimate.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import FactorizationError, LikelihoodPlan, NumericalError, vecchia_loglik
from .covariance import CovarianceModel
from .grouping import group_blocks
from .locations import as_locations
from .neighbors import build_tree, nn_ordered_fast
from .ordering import order_points

DEFAULT_SCHEDULE = tuple(range(10, 101, 10))


@dataclass
class FitConfig:
    """Options for :func:`fit`.

    ``fixed`` maps parameter names to values held constant; every other
    parameter of the family is estimated.  ``window`` is the largest
    relative change between successive stage estimates that counts as
    converged.
    """

    order: str = "ammd"
    seed: int = 0
    schedule: tuple = DEFAULT_SCHEDULE
    group: bool = True
    group_rule: str = "literal"
    xtol: float = 1e-6
    ftol: float = 1e-8
    max_evals: int = 2000
    window: float = 0.02
    fixed: dict = field(default_factory=dict)
    smoothness: float = 0.5
    bounds_factor: float = 1e4
    threads: int | None = None
    jitter: float = 0.0
    spatial_only: bool = True

    def __post_init__(self):
        sched = tuple(int(m) for m in self.schedule)
        if not sched or any(m < 1 for m in sched):
            raise ValueError("neighbor schedule must be nonempty positive counts")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError(f"neighbor schedule must be strictly increasing, got {sched}")
        self.schedule = sched
        if not self.window > 0:
            raise ValueError("convergence window must be positive")


@dataclass
class StageRecord:
    m: int
    theta: dict
    loglik: float
    start_loglik: float
    evaluations: int
    seconds: float
    optimizer_converged: bool
    at_boundary: tuple
    beta: list | None = None

    def as_json(self):
        return {
            "m": self.m,
            "theta": self.theta,
            "loglik": self.loglik,
            "start_loglik": self.start_loglik,
            "evaluations": self.evaluations,
            "seconds": self.seconds,
            "optimizer_converged": self.optimizer_converged,
            "at_boundary": list(self.at_boundary),
            "beta": self.beta,
        }


@dataclass
class FitResult:
    stages: list
    converged: bool
    model: CovarianceModel

    @property
    def final_m(self):
        return self.stages[-1].m

    @property
    def theta(self):
        return self.stages[-1].theta

    @property
    def at_boundary(self):
        return self.stages[-1].at_boundary


def domain_diameter(locs):
    X = as_locations(locs).coords
    return float(np.linalg.norm(X.max(axis=0) - X.min(axis=0)))


def default_model(locs, y, family="matern-isotropic", smoothness=0.5, X=None):
    """Scale-aware starting values for the covariance parameters."""
    locs = as_locations(locs)
    y = np.asarray(y, dtype=float)
    if X is not None:
        resid = y - np.asarray(X) @ np.linalg.lstsq(np.asarray(X), y, rcond=None)[0]
    else:
        resid = y - y.mean()
    var = float(np.var(resid))
    if not var > 0:
        var = 1.0
    diam = domain_diameter(locs)
    kw = dict(
        variance=var,
        range=0.25 * diam if diam > 0 else 1.0,
        smoothness=smoothness,
        nugget=0.01 * var,
        family=family,
        mean=float(y.mean()) if X is None else 0.0,
    )
    if family == "matern-spacetime":
        span = float(np.ptp(locs.times)) if locs.has_time else 0.0
        kw["time_range"] = 0.25 * span if span > 0 else 1.0
    return CovarianceModel(**kw)


class _Objective:
    def __init__(self, base, names, locs, y, X, plan, config):
        self.base, self.names = base, names
        self.locs, self.y, self.X, self.plan, self.config = locs, y, X, plan, config
        self.evaluations = 0
        self.last_beta = None

    def model(self, logp):
        return self.base.replace(**{k: float(math.exp(v)) for k, v in zip(self.names, logp)})

    def loglik(self, model):
        res = vecchia_loglik(
            model, self.locs, self.plan, self.y, X=self.X,
            threads=self.config.threads, jitter=self.config.jitter,
        )
        return res

    def __call__(self, logp):
        self.evaluations += 1
        try:
            ll = self.loglik(self.model(logp)).loglik
        except (FactorizationError, NumericalError, ValueError, OverflowError):
            return np.inf
        return -ll if np.isfinite(ll) else np.inf


def _bounds(start, names, factor):
    out = []
    for k in names:
        v = start.get(k)
        lo, hi = math.log(v / factor), math.log(v * factor)
        if k == "nugget" or k == "variance":
            lo = math.log(v / factor**2)
        if k == "smoothness":
            lo, hi = math.log(0.05), math.log(10.0)
        out.append((lo, hi))
    return out


def fit(locs, y, family="matern-isotropic", config=None, X=None, start=None):
    """Estimate covariance parameters by maximizing the Vecchia likelihood.

    Parameters
    ----------
    locs : LocationSet
    y : array, shape (n,)
    family : str
        Covariance family when ``start`` is not given.
    config : FitConfig
    X : array, shape (n, p), optional
        Design matrix; the mean coefficients are profiled out.  Without it
        the model mean is held at ``start.mean`` (default: sample mean).
    start : CovarianceModel, optional
        Initial parameters; defaulted from the data otherwise.

    Returns
    -------
    FitResult
        One :class:`StageRecord` per neighbor count actually run.
    """
    config = config or FitConfig()
    locs = as_locations(locs)
    y = np.asarray(y, dtype=float)
    if y.shape != (locs.n,):
        raise ValueError(f"y has {y.size} values for {locs.n} locations")
    if X is not None:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != locs.n:
            raise ValueError("design matrix rows do not match the data")
    model = start or default_model(locs, y, family, config.smoothness, X)
    if config.fixed:
        model = model.replace(**{k: float(v) for k, v in config.fixed.items()})
    names = [k for k in model.param_names if k not in config.fixed]
    if model.nugget == 0 and "nugget" in names:
        model = model.replace(nugget=1e-6 * model.variance)
    bounds = _bounds(model, names, config.bounds_factor)

    perm = order_points(locs, config.order, seed=config.seed)
    tree = build_tree(locs, spatial_only=config.spatial_only)
    stages = []
    converged = False
    n = locs.n
    for t, m in enumerate(config.schedule):
        t0 = time.perf_counter()
        m_eff = min(m, n - 1)
        sets = nn_ordered_fast(locs, perm, m_eff, spatial_only=config.spatial_only, tree=tree)
        part = group_blocks(sets, rule=config.group_rule) if config.group else sets
        plan = LikelihoodPlan.build(perm, part)
        obj = _Objective(model, names, locs, y, X, plan, config)
        x0 = np.array([math.log(model.get(k)) for k in names])
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        try:
            start_res = obj.loglik(obj.model(x0))
        except FactorizationError as exc:
            raise FactorizationError(exc.block, exc.positions, obj.model(x0)) from exc
        start_ll = start_res.loglik
        step = 0.5 if t == 0 else 0.1
        simplex = np.vstack([x0] + [x0 + step * e for e in np.eye(len(names))])
        simplex = np.clip(simplex, [b[0] for b in bounds], [b[1] for b in bounds])
        if names:
            res = minimize(
                obj, x0, method="Nelder-Mead", bounds=bounds,
                options=dict(xatol=config.xtol, fatol=config.ftol, maxfev=config.max_evals,
                             initial_simplex=simplex),
            )
            x, ok = res.x, bool(res.success)
            if not (-res.fun >= start_ll):
                x = x0
        else:
            x, ok = x0, True
        new_model = obj.model(x)
        final = obj.loglik(new_model)
        edge = tuple(
            k for k, v, (lo, hi) in zip(names, x, bounds)
            if v - lo < 1e-3 or hi - v < 1e-3
        )
        theta = {k: new_model.get(k) for k in model.param_names}
        stages.append(StageRecord(
            m=m_eff, theta=theta, loglik=final.loglik, start_loglik=start_ll,
            evaluations=obj.evaluations, seconds=time.perf_counter() - t0,
            optimizer_converged=ok, at_boundary=edge,
            beta=None if final.beta is None else [float(b) for b in final.beta],
        ))
        prev, model = model, new_model
        if t > 0:
            change = max(
                abs(new_model.get(k) - prev.get(k)) / abs(new_model.get(k)) for k in names
            ) if names else 0.0
            if change < config.window:
                converged = True
                break
        if m_eff == n - 1:
            break
    return FitResult(stages, converged, model)


def relative_change(a, b, names):
    """Largest relative change from estimate ``a`` to estimate ``b``."""
    return max(abs(b[k] - a[k]) / abs(b[k]) for k in names)
