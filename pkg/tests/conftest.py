import numpy as np
import pytest

from hmod.trips import make_log


def numeric_grad(fn, array, eps=1e-5):
    """Central finite differences of scalar ``fn()`` w.r.t. ``array`` (perturbed in place)."""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = array[idx]
        array[idx] = orig + eps
        up = fn()
        array[idx] = orig - eps
        down = fn()
        array[idx] = orig
        grad[idx] = (up - down) / (2 * eps)
    return grad


def rel_error(analytic, numeric):
    a, n = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


def check_param_grads(loss_fn, params, names=None, eps=1e-5, entries=None, seed=0):
    """Largest relative error between backprop and finite differences over ``names``.

    With ``entries`` set, only that many randomly chosen coordinates of each
    parameter are differenced.
    """
    from hmod import autodiff as ad

    names = names or params.names()
    params.zero_grad()
    ad.backward(loss_fn(), params)
    analytic = {k: params[k].grad.copy() for k in names}
    params.zero_grad()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in names:
        data = params[k].data
        if entries is None or data.size <= entries:
            numeric = numeric_grad(lambda: float(loss_fn().data), data, eps)
            worst = max(worst, rel_error(analytic[k], numeric))
            continue
        idx = rng.choice(data.size, size=entries, replace=False)
        flat = data.reshape(-1)
        numeric = np.empty(entries)
        for i, j in enumerate(idx):
            orig = flat[j]
            flat[j] = orig + eps
            up = float(loss_fn().data)
            flat[j] = orig - eps
            down = float(loss_fn().data)
            flat[j] = orig
            numeric[i] = (up - down) / (2 * eps)
        worst = max(worst, rel_error(analytic[k].reshape(-1)[idx], numeric))
    return worst


@pytest.fixture
def small_log():
    # (0->1, t=1), (0->1, t=2), (1->0, t=3)
    return make_log([(0, 1, 1.0), (0, 1, 2.0), (1, 0, 3.0)], 2)


def random_log(rng, n_nodes=None, n_events=None, t_max=100.0):
    n = n_nodes or int(rng.integers(1, 11))
    m = int(rng.integers(0, 501)) if n_events is None else n_events
    times = np.round(rng.uniform(0, t_max, size=m), 1)   # rounding forces timestamp ties
    rows = [(int(rng.integers(n)), int(rng.integers(n)), float(t)) for t in times]
    return make_log(rows, n)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
