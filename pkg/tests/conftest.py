from __future__ import annotations

import numpy as np
import pytest

from gaitenroll import SynthSpec, gen_synthetic


def fd_gradients(f, arrays: list[np.ndarray], h: float = 1e-6) -> list[np.ndarray]:
    """Central finite differences of a scalar function of several arrays.

    Perturbs the arrays in place coordinate by coordinate and restores them;
    f takes no arguments and must read the same array objects.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Largest coordinate gap relative to the gradient's own magnitude."""
    diff = float(np.abs(a - b).max())
    scale = max(float(np.abs(a).max()), float(np.abs(b).max()), 1e-12)
    return diff / scale


@pytest.fixture(scope="session")
def small_dataset():
    """30 well-separated identities, 6 walks each, 16-dim."""
    return gen_synthetic(
        SynthSpec(n_ids=30, walks_per_id=6, dim=16, centroid_scale=10.0, sigma_lo=0.2, seed=424242)
    )
