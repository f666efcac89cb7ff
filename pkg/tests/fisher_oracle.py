"""Independent Fisher information by direct summation over both outcomes."""
import numpy as np


def fisher_by_summation(theta, visibilities, nu, s_values):
    """Sum over bases and outcomes of grad p grad p^T / p, ``nu/2`` photons per basis."""
    m = len(s_values)
    info = np.zeros((m + 1, m + 1))
    for i, (s, v, n) in enumerate(zip(s_values, visibilities, nu)):
        for basis in (0, 1):
            arg = 2 * s * theta
            f = np.cos(arg) if basis == 0 else np.sin(arg)
            df = -2 * s * np.sin(arg) if basis == 0 else 2 * s * np.cos(arg)
            for o in (1, -1):
                p = 0.5 * (1 + o * v * f)
                grad = np.zeros(m + 1)
                grad[0] = 0.5 * o * v * df
                grad[i + 1] = 0.5 * o * f
                info += 0.5 * n * np.outer(grad, grad) / p
    return info
