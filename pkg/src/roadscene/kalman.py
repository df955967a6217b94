"""Minimal linear Kalman algebra shared by the trackers.

Plain predict/update steps on (x, P) pairs; callers own the model matrices.
Covariances are re-symmetrized after each update so thousand-step runs stay
well conditioned.
"""

from __future__ import annotations

import numpy as np


def kf_predict_step(x: np.ndarray, p: np.ndarray, f: np.ndarray,
                    q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = f @ x
    p = f @ p @ f.T + q
    return x, p


def kf_update_step(x: np.ndarray, p: np.ndarray, z: np.ndarray,
                   h: np.ndarray, r: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray]:
    innovation = z - h @ x
    s = h @ p @ h.T + r
    k = p @ h.T @ np.linalg.inv(s)
    x = x + k @ innovation
    p = (np.eye(len(x)) - k @ h) @ p
    p = 0.5 * (p + p.T)
    return x, p
