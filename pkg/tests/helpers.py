"""Shared test oracles: central finite differences and gradient comparison."""

import numpy as np

ACCEPTANCE_RESULTS = []


def record_criterion(num: int, desc: str, ok: bool, detail: str = ""):
    """Log one acceptance-criterion outcome; echoed in the terminal summary."""
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {num}: {desc}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_RESULTS.append(line)
    print(line)
    assert ok, line


def fd_grad(f, x, h=1e-5):
    """Central finite-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, b, floor=1e-6):
    """Elementwise relative error with a floor for near-zero entries."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def assert_grad_close(analytic, numeric, tol, exclude=None):
    """Assert elementwise relative error <= tol, optionally masking entries."""
    err = rel_err(analytic, numeric)
    if exclude is not None:
        err = err[~exclude]
    assert err.size == 0 or err.max() <= tol, \
        f"max relative gradient error {err.max():.3e} > {tol:g}"
