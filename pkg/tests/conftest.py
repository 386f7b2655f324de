"""Shared test helpers: finite-difference gradient oracle and model shrinking."""

from __future__ import annotations

import numpy as np

from rdflow.numcore import Tensor, backward, no_grad, zero_grads
from rdflow.velocity import ModelConfig

FD_STEP = 1e-5
FD_TOL = 1e-4


def numeric_grad(loss_fn, param: Tensor, h: float = FD_STEP) -> np.ndarray:
    """Central finite differences of loss_fn() w.r.t. every entry of param.

    loss_fn must re-run the forward pass from scratch; the parameter is
    perturbed in place and restored.
    """
    out = np.zeros_like(param.data)
    flat = param.data.ravel()
    gflat = out.ravel()
    with no_grad():
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = float(loss_fn().data)
            flat[i] = keep - h
            down = float(loss_fn().data)
            flat[i] = keep
            gflat[i] = (up - down) / (2.0 * h)
    return out


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Worst entrywise |a - n| / max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(loss_fn, params, h: float = FD_STEP, tol: float = FD_TOL) -> float:
    """Analytic backward vs central differences for every given parameter.

    Returns the worst relative error; asserts it is below tol.
    """
    params = list(params)
    zero_grads(params)
    loss = loss_fn()
    backward(loss)
    worst = 0.0
    for p in params:
        assert p.grad is not None, "parameter did not receive a gradient"
        num = numeric_grad(loss_fn, p, h=h)
        worst = max(worst, max_rel_error(p.grad, num))
    assert worst < tol, f"gradient mismatch: worst relative error {worst:.3e}"
    return worst


def char_poly_eigenvalues(mat: np.ndarray) -> np.ndarray:
    """Eigenvalues via Faddeev-LeVerrier characteristic-polynomial roots.

    Independent of np.linalg.eig; used as the oracle for spectral bounds.
    """
    n = mat.shape[0]
    coeffs = [1.0]
    m = np.zeros_like(mat)
    for k in range(1, n + 1):
        m = mat @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(mat @ m) / k)
    roots = np.roots(coeffs)
    assert np.all(np.abs(roots.imag) < 1e-6), "expected a real spectrum"
    return np.sort(roots.real)


def tiny_model_config(**overrides) -> ModelConfig:
    """A shrunken ModelConfig for fast gradient and equivariance tests."""
    base = dict(
        variant="mpnn",
        adjacency="attention",
        dim=2,
        time_features=2,
        reaction_hidden=(8,),
        attention_width=4,
        mpnn_hidden=(6,),
        mpnn_width=4,
        gps_width=8,
        gps_rounds=1,
        gps_heads=2,
        walk_length=2,
        pe_dim=3,
        knn_k=2,
        kappa_hidden=(6,),
        zero_init_outputs=True,
    )
    base.update(overrides)
    return ModelConfig(**base)
