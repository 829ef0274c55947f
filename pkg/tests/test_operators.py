import numpy as np
import pytest

from levelcurv import OperatorSpec, ellipticity_lambda, eval_operator
from levelcurv.errors import ArgError
from levelcurv.jets import Jet2
from levelcurv.operators import eval_operator_at


def jet(grad, hess, value=0.0):
    g = np.asarray(grad, dtype=float)
    return Jet2(value, g, np.asarray(hess, dtype=float), np.zeros(g.size))


def random_spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T + 0.1 * np.eye(n)


def test_heat_example():
    ev = eval_operator(OperatorSpec.heat(), jet((0.3, 0.1), np.diag([-2.0, -2.0])))
    assert ev.F == -4.0
    assert np.array_equal(ev.dF_dr, np.eye(2))


def test_linear_example():
    ev = eval_operator(OperatorSpec.linear(np.diag([2.0, 3.0])), jet((0, 1), np.eye(2)))
    assert ev.F == 5.0
    assert np.array_equal(ev.dF_dr, np.diag([2.0, 3.0]))
    assert not ev.d2F_drdr.any() and not ev.d2F_drdp.any() and not ev.d2F_dpdp.any()


def test_grad_augmented_example():
    ev = eval_operator(OperatorSpec.grad_augmented(np.eye(2), 0.5), jet((3, 4), np.zeros((2, 2))))
    assert ev.F == 12.5
    assert np.allclose(ev.dF_dp, (3, 4))
    assert np.allclose(ev.d2F_dpdp, np.eye(2))


def test_invalid_specs():
    with pytest.raises(ArgError):
        OperatorSpec("frobnicate")
    with pytest.raises(ArgError):
        OperatorSpec.linear([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ArgError):
        OperatorSpec.linear([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ArgError):
        OperatorSpec("HEAT", np.eye(2))
    with pytest.raises(ArgError):
        OperatorSpec("LINEAR", np.eye(2), beta=1.0)
    with pytest.raises(ArgError):
        OperatorSpec.linear(np.eye(4))
    with pytest.raises(ArgError):
        eval_operator("HEAT", jet((1, 0), np.eye(2)))


def test_ellipticity_examples():
    states = [jet((1, 0), np.eye(2))]
    assert ellipticity_lambda(OperatorSpec.heat(), states) == 1.0
    assert ellipticity_lambda(OperatorSpec.linear(np.diag([2.0, 3.0])), states) == 2.0
    assert ellipticity_lambda(OperatorSpec.linear([[2.0, 1.0], [1.0, 2.0]]), states) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ArgError):
        ellipticity_lambda(OperatorSpec.heat(), [])


def test_ellipticity_monotone_under_psd_addition():
    rng = np.random.default_rng(4)
    states = [jet(rng.normal(size=3), np.eye(3))]
    for _ in range(50):
        m = random_spd(rng, 3)
        b = rng.normal(size=(3, 3))
        lam0 = ellipticity_lambda(OperatorSpec.linear(m), states)
        lam1 = ellipticity_lambda(OperatorSpec.linear(m + b @ b.T), states)
        assert lam1 >= lam0 - 1e-12


def _fd_check(spec, r, p, step=1e-5):
    n = p.size
    ev = eval_operator_at(spec, r, p)
    f = lambda rr, pp: spec.value(rr, pp)
    scale = 1.0 + abs(ev.F)
    for a in range(n):
        for b in range(n):
            e = np.zeros((n, n))
            e[a, b] = 1.0
            d = (f(r + step * e, p) - f(r - step * e, p)) / (2 * step)
            assert abs(d - ev.dF_dr[a, b]) <= 1e-6 * scale
        e = np.zeros(n)
        e[a] = 1.0
        d = (f(r, p + step * e) - f(r, p - step * e)) / (2 * step)
        assert abs(d - ev.dF_dp[a]) <= 1e-6 * scale
        for b in range(n):
            e2 = np.zeros(n)
            e2[b] = 1.0
            h = 1e-3
            d2 = (f(r, p + h * e + h * e2) - f(r, p + h * e - h * e2)
                  - f(r, p - h * e + h * e2) + f(r, p - h * e - h * e2)) / (4 * h * h)
            assert abs(d2 - ev.d2F_dpdp[a, b]) <= 1e-6 * scale
    assert np.array_equal(ev.dF_dr, ev.dF_dr.T)


@pytest.mark.parametrize("kind", ["HEAT", "LINEAR", "GRAD_AUGMENTED"])
def test_derivatives_match_finite_differences(kind):
    rng = np.random.default_rng(len(kind))
    for k in range(100):
        n = 2 + k % 2
        if kind == "HEAT":
            spec = OperatorSpec.heat()
        elif kind == "LINEAR":
            spec = OperatorSpec.linear(random_spd(rng, n))
        else:
            spec = OperatorSpec.grad_augmented(random_spd(rng, n), rng.normal())
        r = rng.normal(size=(n, n))
        _fd_check(spec, 0.5 * (r + r.T), rng.normal(size=n))


def test_rate_matches_value():
    rng = np.random.default_rng(8)
    spec = OperatorSpec.grad_augmented(random_spd(rng, 2), 0.7)
    g = rng.normal(size=(20, 2))
    h = rng.normal(size=(20, 2, 2))
    h = h + np.swapaxes(h, 1, 2)
    want = [spec.value(h[i], g[i]) for i in range(20)]
    assert np.allclose(spec.rate(g, h), want, rtol=1e-14)


def test_to_dict():
    assert OperatorSpec.heat().to_dict() == {"kind": "HEAT"}
    d = OperatorSpec.grad_augmented(np.eye(2), 0.25).to_dict()
    assert d == {"kind": "GRAD_AUGMENTED", "matrix": [[1.0, 0.0], [0.0, 1.0]], "beta": 0.25}
