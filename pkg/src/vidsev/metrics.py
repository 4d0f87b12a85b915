"""Error and agreement metrics between severity predictions and labels.

RMSE and MAE are plain elementwise errors. PCC uses the population
covariance and standard deviations; CCC rescales PCC by how well the two
means and variances agree, so |CCC| <= |PCC| always holds and the two
coincide exactly when means and variances match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass
class MetricsReport:
    """Metric bundle over n prediction/label pairs.

    ``pcc``/``ccc`` are None when undefined (a constant series makes the
    correlation denominator vanish).
    """

    rmse: float
    mae: float
    pcc: float | None
    ccc: float | None
    n: int

    def as_dict(self) -> dict:
        return {"rmse": self.rmse, "mae": self.mae, "pcc": self.pcc, "ccc": self.ccc, "n": self.n}


def compute_metrics(predictions, ground_truth) -> MetricsReport:
    """Compute RMSE, MAE, PCC and CCC for paired vectors of length >= 2."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    g = np.asarray(ground_truth, dtype=np.float64).ravel()
    if p.shape != g.shape:
        raise DomainError(f"length mismatch: {p.shape[0]} predictions vs {g.shape[0]} labels")
    n = p.shape[0]
    if n < 2:
        raise DomainError("metrics need at least two prediction/label pairs")
    if not (np.isfinite(p).all() and np.isfinite(g).all()):
        raise DomainError("metrics inputs must be finite")

    err = p - g
    rmse = math.sqrt(float(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))

    mu_p, mu_g = float(p.mean()), float(g.mean())
    var_p = float(np.mean((p - mu_p) ** 2))
    var_g = float(np.mean((g - mu_g) ** 2))
    cov = float(np.mean((p - mu_p) * (g - mu_g)))

    denom_pcc = math.sqrt(var_p) * math.sqrt(var_g)
    if denom_pcc > 0.0:
        pcc = max(-1.0, min(1.0, cov / denom_pcc))
        ccc = 2.0 * cov / (var_p + var_g + (mu_p - mu_g) ** 2)
        # |ccc| <= |pcc| holds by AM-GM; clamp so it also holds bit-exactly
        ccc = math.copysign(min(abs(ccc), abs(pcc)), ccc)
    else:
        pcc = ccc = None  # a constant series leaves both correlations undefined

    return MetricsReport(rmse=rmse, mae=mae, pcc=pcc, ccc=ccc, n=n)
