from pathlib import Path

import numpy as np
import pytest

from bcsnet.nn import DenseLayer, mse_loss, network_forward

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def data_dir():
    return DATA


def random_net(rng, dims, activations=None):
    """Dense layers with N(0, 1/fan_in) weights and small random biases."""
    layers = []
    for k, (i, o) in enumerate(zip(dims[:-1], dims[1:])):
        act = activations[k] if activations else ("relu" if k < len(dims) - 2 else "identity")
        layers.append(
            DenseLayer(rng.normal(0, 1 / np.sqrt(i), (o, i)), rng.normal(0, 0.1, o), act)
        )
    return layers


def numeric_gradients(layers, x, target, step=1e-6):
    """Central finite differences of MSE loss w.r.t. every parameter.

    Also returns, per parameter array, a mask of coordinates whose
    perturbation flips the sign of some ReLU pre-activation (kink crossings).
    """
    def loss():
        return mse_loss(network_forward(layers, x)[0], target)

    def signs():
        _, cache = network_forward(layers, x)
        return [np.sign(z) for z, l in zip(cache.pre, layers) if l.activation == "relu"]

    base = signs()
    grads, kinks = [], []
    for layer in layers:
        for arr in (layer.weights, layer.bias):
            g = np.zeros_like(arr)
            kink = np.zeros(arr.shape, dtype=bool)
            flat, gflat, kflat = arr.reshape(-1), g.reshape(-1), kink.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + step
                lp, sp = loss(), signs()
                flat[i] = old - step
                lm, sm = loss(), signs()
                flat[i] = old
                gflat[i] = (lp - lm) / (2 * step)
                kflat[i] = any(
                    not (np.array_equal(a, b) and np.array_equal(a, c))
                    for a, b, c in zip(base, sp, sm)
                )
            grads.append(g)
            kinks.append(kink)
    return grads, kinks


def near_kink(layers, x, tol=1e-6):
    _, cache = network_forward(layers, x)
    return any(
        np.any(np.abs(z) < tol) for z, l in zip(cache.pre, layers) if l.activation == "relu"
    )


def rel_error(a, b, floor=1e-8):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
