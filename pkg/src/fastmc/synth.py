"""Synthetic rank-k ground truths with controlled incoherence and conditioning."""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import IncoherenceUnreachable
from .metrics import incoherence
from .prng import derive_seed


@dataclass(frozen=True, eq=False)
class GroundTruth:
    u_star: np.ndarray
    sigma_star: np.ndarray
    v_star: np.ndarray
    mu_actual: float
    kappa: float
    seed: int = 0

    def __post_init__(self):
        s = self.sigma_star
        if s.ndim != 1 or s.size != self.u_star.shape[1] or s.size != self.v_star.shape[1]:
            raise ValueError("sigma_star must have one entry per factor column")
        if np.any(s <= 0) or np.any(np.diff(s) > 0):
            raise ValueError("sigma_star must be positive and nonincreasing")

    @property
    def shape(self):
        return (self.u_star.shape[0], self.v_star.shape[0])

    @property
    def k(self):
        return self.sigma_star.size

    def dense(self):
        return (self.u_star * self.sigma_star) @ self.v_star.T

    def frobenius(self):
        return float(np.linalg.norm(self.sigma_star))


def _incoherent_basis(rows, k, mu_target, rng, attempts):
    best = None
    for _ in range(attempts):
        q, _ = np.linalg.qr(rng.standard_normal((rows, k)))
        mu = incoherence(q)
        if best is None or mu < best[1]:
            best = (q, mu)
        if mu <= mu_target:
            return q, mu
    raise IncoherenceUnreachable(
        f"no {rows}x{k} basis with incoherence <= {mu_target} in {attempts} draws "
        f"(best {best[1]:.3f})"
    )


def gen_incoherent(m, n, k, kappa, mu_target, seed, attempts=100):
    """Random ``M = U* diag(sigma*) V*^T`` with ``max(mu(U*), mu(V*)) <= mu_target``.

    Bases are orthonormalized Gaussians, redrawn until they are incoherent
    enough. Singular values decay geometrically from ``kappa`` to 1.
    """
    if not 1 <= k <= min(m, n):
        raise ValueError(f"need 1 <= k <= min(m, n), got k={k}")
    if kappa < 1 or mu_target < 1:
        raise ValueError("kappa and mu_target must be >= 1")
    u, mu_u = _incoherent_basis(m, k, mu_target, np.random.default_rng(derive_seed(seed, 0)), attempts)
    v, mu_v = _incoherent_basis(n, k, mu_target, np.random.default_rng(derive_seed(seed, 1)), attempts)
    if k == 1:
        sigma = np.ones(1)
    else:
        sigma = float(kappa) ** (np.arange(k - 1, -1, -1) / (k - 1))
    return GroundTruth(u, sigma, v, max(mu_u, mu_v), float(sigma[0] / sigma[-1]), int(seed))


def entry_oracle(gt, i, j):
    """``M[i, j]`` in O(k) without materializing ``M``; accepts index arrays."""
    return np.einsum("...l,l,...l->...", gt.u_star[i], gt.sigma_star, gt.v_star[j])


def save_ground_truth(gt, out_dir):
    """Write ``u_star.dmat``, ``sigma_star.dmat``, ``v_star.dmat`` and ``ground_truth.json``."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    linalg.write_dmat(os.path.join(out_dir, "u_star.dmat"), gt.u_star)
    linalg.write_dmat(os.path.join(out_dir, "sigma_star.dmat"), gt.sigma_star[:, None])
    linalg.write_dmat(os.path.join(out_dir, "v_star.dmat"), gt.v_star)
    meta = {
        "k": gt.k,
        "sigma_star": [float(x) for x in gt.sigma_star],
        "mu_actual": gt.mu_actual,
        "kappa": gt.kappa,
        "seed": gt.seed,
    }
    with open(os.path.join(out_dir, "ground_truth.json"), "w") as fh:
        json.dump(meta, fh, indent=2)


def load_ground_truth(path):
    path = os.fspath(path)
    with open(os.path.join(path, "ground_truth.json")) as fh:
        meta = json.load(fh)
    u = linalg.read_dmat(os.path.join(path, "u_star.dmat"))
    s = linalg.read_dmat(os.path.join(path, "sigma_star.dmat"))[:, 0]
    v = linalg.read_dmat(os.path.join(path, "v_star.dmat"))
    return GroundTruth(u, s, v, float(meta["mu_actual"]), float(meta["kappa"]), int(meta["seed"]))
