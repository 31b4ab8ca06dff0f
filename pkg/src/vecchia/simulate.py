"""Unconditional draws, kriging and conditional draws from the sparse factor.

Random numbers come from numpy's counter-based Philox generator keyed by the
user seed, so a seed reproduces the same draws on every platform.  An
ensemble of N members uses one (N, n) block of standard normals from that
stream, row r feeding member r.
"""

from dataclasses import dataclass

import numpy as np

from .core import build_gamma_tilde
from .grouping import group_blocks
from .locations import as_locations
from .neighbors import nn_ordered_fast
from .ordering import Permutation, order_points


def rng_from_seed(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def _normals(n, seed, size):
    rng = rng_from_seed(seed)
    if size is None:
        return rng.standard_normal(n)[:, None]
    return rng.standard_normal((int(size), n)).T


def unconditional_draw(G, seed=0, size=None, unpermute=True, mean=0.0):
    """Draw ``Y = G^{-1} Z`` with standard normal ``Z``.

    Returns shape (n,) or, with ``size``, (size, n).  Values are in original
    order unless ``unpermute=False``.
    """
    Z = _normals(G.n, seed, size)
    Y = G.solve(Z)
    if unpermute and G.perm is not None:
        Y = Y[G.perm.inverse]
    Y = Y.T + mean
    return Y[0] if size is None else Y


@dataclass(frozen=True, eq=False)
class PredictionSetup:
    """Joint factor for observed points followed by prediction points.

    Positions ``0..n_obs-1`` of the joint ordering are observed points, so
    the factor splits into the blocks G11, G21 and G22 by position.
    """

    G: object
    perm: Permutation
    n_obs: int
    n_pred: int
    mean: float = 0.0

    @property
    def G11(self):
        return self.G.to_scipy()[: self.n_obs, : self.n_obs]

    @property
    def G21(self):
        return self.G.to_scipy()[self.n_obs:, : self.n_obs]

    @property
    def G22(self):
        return self.G.to_scipy()[self.n_obs:, self.n_obs:]

    def is_valid(self):
        f = self.perm.forward
        return bool(np.all(f[: self.n_obs] < self.n_obs) and np.all(self.G.diag > 0))


def joint_permutation(obs_perm, pred_perm):
    n_obs = len(obs_perm)
    return Permutation.from_forward(np.concatenate([obs_perm.forward, n_obs + pred_perm.forward]))


def prediction_setup(model, obs_locs, pred_locs, m, m_pred=None, order="ammd",
                     pred_order="random", seed=0, group=False, group_rule="literal",
                     spatial_only=True, threads=None, obs_perm=None, jitter=0.0):
    """Order, find neighbors and build the joint factor for prediction.

    Observed points keep their own ordering; prediction points follow,
    ordered among themselves by ``pred_order``.  Prediction points use
    ``m_pred`` neighbors (default ``m``) drawn from all earlier points,
    observed or predicted.  ``jitter`` is added to every block diagonal,
    which is needed when prediction points coincide with observed points
    and there is no nugget.
    """
    obs = as_locations(obs_locs)
    pred = as_locations(pred_locs)
    joint = obs.concat(pred)
    if obs_perm is None:
        obs_perm = order_points(obs, order, seed=seed)
    pred_perm = order_points(pred, pred_order, seed=seed + 1)
    perm = joint_permutation(obs_perm, pred_perm)
    m_pred = m if m_pred is None else m_pred
    mrow = np.concatenate([np.full(obs.n, m), np.full(pred.n, m_pred)])
    sets = nn_ordered_fast(joint, perm, mrow, spatial_only=spatial_only)
    part = group_blocks(sets, rule=group_rule) if group else sets
    G = build_gamma_tilde(model, joint, perm, part, threads=threads, jitter=jitter)
    return PredictionSetup(G, perm, obs.n, pred.n, model.mean)


def _observed_permuted(setup, y1):
    y1 = np.asarray(y1, dtype=float)
    if y1.shape[0] != setup.n_obs:
        raise ValueError(f"y1 has {y1.shape[0]} rows for {setup.n_obs} observed points")
    return y1[setup.perm.forward[: setup.n_obs]]


def _solve_pred(setup, Y1p):
    """``-G22^{-1} G21 Y1`` for permuted observed columns ``Y1p`` (n_obs, q)."""
    B = np.zeros((setup.G.n, Y1p.shape[1]))
    B[: setup.n_obs] = Y1p
    X = setup.G.solve(B, start=setup.n_obs)[setup.n_obs:]
    pred_fwd = setup.perm.forward[setup.n_obs:] - setup.n_obs
    out = np.empty_like(X)
    out[pred_fwd] = X
    return out


def conditional_expectation(setup, y1):
    """Approximate kriging predictor at the prediction points (original order)."""
    y1p = _observed_permuted(setup, y1) - setup.mean
    return _solve_pred(setup, y1p[:, None])[:, 0] + setup.mean


def conditional_draw(setup, y1, seed=0, size=None):
    """Conditional simulation: ``E(Y2 | y1 - Y1*) + Y2*`` for a joint draw Y*.

    Returns shape (n_pred,) or, with ``size``, (size, n_pred).
    """
    y1p = _observed_permuted(setup, y1) - setup.mean
    Z = _normals(setup.G.n, seed, size)
    Ystar = setup.G.solve(Z)
    n1 = setup.n_obs
    resid = y1p[:, None] - Ystar[:n1]
    pred = _solve_pred(setup, resid)
    pred_fwd = setup.perm.forward[n1:] - n1
    Y2 = np.empty_like(pred)
    Y2[pred_fwd] = Ystar[n1:]
    out = (pred + Y2).T + setup.mean
    return out[0] if size is None else out


@dataclass(frozen=True)
class EnsembleSummary:
    mean: np.ndarray
    sd: np.ndarray
    draws: np.ndarray | None = None


def conditional_ensemble(setup, y1, members, seed=0, keep_draws=False):
    """Sample mean and standard deviation of ``members`` conditional draws."""
    D = conditional_draw(setup, y1, seed=seed, size=members)
    return EnsembleSummary(D.mean(axis=0), D.std(axis=0, ddof=1), D if keep_draws else None)
