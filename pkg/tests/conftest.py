import numpy as np
import pytest

from regclslab.model import loss_and_gradients


def finite_difference_errors(state, xs, ys, classes, lam, step=1e-5):
    """Central finite differences of the combined batch loss against the
    analytic gradients; returns the worst (absolute_diff, scale) pair info.

    The loss is evaluated through loss_and_gradients so both sides share
    one definition.
    """

    def loss():
        return loss_and_gradients(state, xs, ys, classes, lam)[0].combined

    _, grads = loss_and_gradients(state, xs, ys, classes, lam)
    worst = (0.0, 0.0, None)  # abs diff, scale, where
    for name, values in state.parameters().items():
        flat = values.reshape(-1)
        analytic = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss()
            flat[i] = orig - step
            down = loss()
            flat[i] = orig
            fd = (up - down) / (2.0 * step)
            diff = abs(fd - analytic[i])
            scale = max(abs(fd), abs(analytic[i]))
            if diff - 1e-4 * scale > worst[0] - 1e-4 * worst[1]:
                worst = (diff, scale, f"{name}[{i}]")
    return worst


def assert_gradients_match(state, xs, ys, classes, lam, step=1e-5,
                           rtol=1e-4, atol=1e-8):
    diff, scale, where = finite_difference_errors(state, xs, ys, classes, lam, step)
    assert diff <= rtol * scale + atol, (
        f"gradient mismatch at {where}: |fd-analytic|={diff:.3e}, scale={scale:.3e}"
    )


_ACCEPTANCE_PREFIX = "tests/test_acceptance.py"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call" or not item.nodeid.startswith(_ACCEPTANCE_PREFIX):
        return
    writer = item.config.pluginmanager.get_plugin("terminalreporter")
    if writer is None:
        return
    status = "PASS" if report.passed else "FAIL"
    writer.write_line(f"[acceptance] {item.name}: {status}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
