"""Measurement model, noisy sensor simulation, WLS state estimation and the
residual bad-data detector.

Measurement rows are ordered as the matrix stacking: forward branch flows,
reverse branch flows, then nodal injections (M = 2L + N).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import stats

from .case_io import GridCase
from .network import DisconnectedGraphError, Topology, susceptance


class EstimationError(np.linalg.LinAlgError):
    pass


def measurement_matrix(case: GridCase, reactances: np.ndarray | None = None,
                       live: np.ndarray | None = None) -> np.ndarray:
    """H = [D A^T; -D A^T; A D A^T].  Dead branches keep their (all-zero) flow rows."""
    topo = Topology.from_case(case, live)
    x = case.reactances if reactances is None else np.asarray(reactances, dtype=float)
    D, B = susceptance(topo, x)
    DAt = D @ topo.incidence().T
    return np.vstack([DAt, -DAt, B])


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    H: np.ndarray
    sigma: np.ndarray
    alpha: float
    tau: float
    ref: int
    weighted: bool = True

    @property
    def n_meas(self) -> int:
        return self.H.shape[0]

    @property
    def n_bus(self) -> int:
        return self.H.shape[1]

    @property
    def dof(self) -> int:
        return self.n_meas - (self.n_bus - 1)

    @property
    def W(self) -> np.ndarray:
        return np.diag(1.0 / self.sigma**2)

    @cached_property
    def _keep(self) -> np.ndarray:
        return np.delete(np.arange(self.n_bus), self.ref)

    @cached_property
    def _scale(self) -> np.ndarray:
        # row scaling that turns the problem into ordinary least squares
        return 1.0 / self.sigma

    @cached_property
    def _qr(self) -> tuple[np.ndarray, np.ndarray]:
        Hs = self.H[:, self._keep] * self._scale[:, None]
        Q, R = np.linalg.qr(Hs)
        diag = np.abs(np.diag(R))
        if diag.size and diag.min() <= 1e-12 * max(diag.max(), 1.0):
            cond = np.inf if diag.min() == 0 else diag.max() / diag.min()
            raise EstimationError(f"normal equations are singular (condition ~ {cond:.3g})")
        return Q, R


def chi2_threshold(dof: int, alpha: float) -> float:
    return float(np.sqrt(stats.chi2.ppf(1.0 - alpha, dof)))


def build_model(case: GridCase, reactances: np.ndarray | None = None, sigma: float | np.ndarray = 1.0,
                alpha: float = 0.05, *, weighted: bool = True) -> MeasurementModel:
    """Assemble H at the given reactances and calibrate the detector threshold.

    The threshold makes the attack-free alarm rate equal ``alpha``: r^2 is
    chi-square with M - (N - 1) degrees of freedom under Gaussian noise.
    """
    topo = Topology.from_case(case)
    if not topo.is_connected():
        raise DisconnectedGraphError(f"disconnected graph: islands {topo.island_bus_ids()}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    H = measurement_matrix(case, reactances)
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (H.shape[0],)).copy()
    if np.any(sig <= 0):
        raise ValueError("noise standard deviations must be positive")
    dof = H.shape[0] - (H.shape[1] - 1)
    tau = chi2_threshold(dof, alpha)
    if not weighted:
        if np.ptp(sig) > 0:
            raise ValueError("the unweighted residual needs a single noise level")
        tau *= sig[0]
    model = MeasurementModel(H, sig, alpha, tau, case.ref_index, weighted)
    model._qr  # fail early on a singular model
    return model


def simulate_measurements(model: MeasurementModel, theta: np.ndarray,
                          rng_seed: int | np.random.Generator | None = None) -> np.ndarray:
    """z = H theta + n with independent Gaussian noise of std ``model.sigma``."""
    rng = np.random.default_rng(rng_seed)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.n_bus,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({model.n_bus},)")
    return model.H @ theta + rng.standard_normal(model.n_meas) * model.sigma


def wls_estimate(model: MeasurementModel, z: np.ndarray) -> np.ndarray:
    """theta_hat = (H^T W H)^-1 H^T W z with the reference angle pinned to zero.

    ``z`` may be a single vector or a (trials, M) batch.
    """
    z = np.asarray(z, dtype=float)
    Q, R = model._qr
    zs = z * model._scale
    coef = np.linalg.solve(R, (zs @ Q).T).T
    out = np.zeros(z.shape[:-1] + (model.n_bus,))
    out[..., model._keep] = coef
    return out


def residual_norm(model: MeasurementModel, z: np.ndarray) -> np.ndarray | float:
    """Weighted (or plain) norm of z - H theta_hat, vectorised over a leading batch axis."""
    z = np.asarray(z, dtype=float)
    Q, _ = model._qr
    zs = z * model._scale
    res = zs - (zs @ Q) @ Q.T
    r = np.linalg.norm(res, axis=-1)
    if not model.weighted:
        r = r * model.sigma[0]
    return r if r.ndim else float(r)


def bdd_residual(model: MeasurementModel, z: np.ndarray):
    """Return (r, alarm) with alarm = r > tau."""
    r = residual_norm(model, z)
    return r, r > model.tau
