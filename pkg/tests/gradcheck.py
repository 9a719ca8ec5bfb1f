"""Central finite differences, kept independent of the analytic backward passes."""
import numpy as np

EPS = 1e-5


def tolerance(g):
    return max(1e-4, 1e-2 * abs(g))


def check_gradients(loss_fn, params, grads, per_tensor=None, seed=0):
    """Compare analytic ``grads`` against central differences of ``loss_fn()``.

    ``per_tensor`` limits how many coordinates are probed in each parameter
    array (chosen at random, seeded); ``None`` probes all of them. Returns the
    list of failing ``(name, index, analytic, numeric)`` tuples and the number
    of probed coordinates.
    """
    gen = np.random.default_rng(seed)
    failures, probed = [], 0
    for name, p in params.items():
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if per_tensor is not None and flat.size > per_tensor:
            idx = gen.choice(flat.size, per_tensor, replace=False)
        g = grads[name].reshape(-1)
        for i in idx:
            old = flat[i]
            flat[i] = old + EPS
            up = loss_fn()
            flat[i] = old - EPS
            down = loss_fn()
            flat[i] = old
            num = (up - down) / (2 * EPS)
            probed += 1
            if abs(num - g[i]) > tolerance(g[i]):
                failures.append((name, int(i), float(g[i]), float(num)))
    return failures, probed
