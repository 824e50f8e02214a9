import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def finite_diff_check(net, x, weights, h=1e-5, n_param_samples=10,
                      n_input_samples=10, sample_rng=None):
    """Central finite-difference oracle for d(sum(weights * net(x)))/d(params, x).

    Returns the worst relative error over sampled coordinates.  Coordinates
    whose true gradient is degenerate (both sides at the FD noise floor) are
    measured against the overall gradient scale instead of their own.
    """
    if sample_rng is None:
        sample_rng = np.random.default_rng(0)
    x = np.array(x, dtype=np.float64)

    def loss():
        val = float(np.sum(weights * net.forward(x, train=True)))
        net.drop_caches()
        return val

    net.forward(x, train=True)
    for p in net.params.params.values():
        p.grad.fill(0.0)
    dx = net.backward(weights)

    gmax = max([float(np.max(np.abs(p.grad))) for p in net.params.params.values()]
               + [float(np.max(np.abs(dx)))] + [1e-12])
    floor = 1e-3 * gmax

    def rel_err(fd, an):
        return abs(fd - an) / max(abs(fd) + abs(an), floor)

    worst = 0.0
    for p in net.params.params.values():
        flat = p.data.ravel()
        idx = sample_rng.integers(0, flat.size, size=min(n_param_samples, flat.size))
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            lp = loss()
            flat[i] = orig - h
            lm = loss()
            flat[i] = orig
            worst = max(worst, rel_err((lp - lm) / (2 * h), p.grad.ravel()[i]))
    flat = x.ravel()
    idx = sample_rng.integers(0, flat.size, size=min(n_input_samples, flat.size))
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        lp = loss()
        flat[i] = orig - h
        lm = loss()
        flat[i] = orig
        worst = max(worst, rel_err((lp - lm) / (2 * h), dx.ravel()[i]))
    return worst
