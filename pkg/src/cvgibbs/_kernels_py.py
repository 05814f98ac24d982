"""Pure numpy version of the compiled generator kernel."""

import numpy as np


def weighted_kron_accumulate(out, lg, omega, mode, param):
    """mode 0: weight 1; mode 1: exp(-delta^2 * param); mode 2: |delta| <= param."""
    prod = np.kron(lg.conj(), lg)
    if mode != 0:
        om = omega.reshape(-1, order="F")
        delta = om[None, :] - om[:, None]
        if mode == 1:
            prod *= np.exp(-delta * delta * param)
        else:
            prod *= np.abs(delta) <= param
    out += prod
