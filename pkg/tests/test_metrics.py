import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nucv.errors import InputShapeError
from nucv.metrics import evaluate_depth, final_spacing


def test_identical():
    g = np.linspace(3, 7, 20).reshape(4, 5)
    m = evaluate_depth(g, g, spacing=0.02)
    assert m.mae == 0 and m.rmse == 0 and (m.within_1, m.within_2, m.within_4) == (1, 1, 1)


@given(st.floats(0.001, 10))
def test_constant_offset(c):
    g = np.linspace(3, 7, 20).reshape(4, 5)
    assert evaluate_depth(g + c, g).mae == pytest.approx(c, rel=1e-12)


def test_scalar_oracle(rng):
    est, gt = rng.uniform(size=(7, 9)), rng.uniform(size=(7, 9))
    mask = rng.uniform(size=(7, 9)) > 0.3
    s, s2, n, w1, w2, w4 = 0.0, 0.0, 0, 0, 0, 0
    sp = 0.1
    for y in range(7):
        for x in range(9):
            if mask[y, x]:
                e = abs(est[y, x] - gt[y, x])
                s += e
                s2 += e * e
                n += 1
                w1 += e <= sp
                w2 += e <= 2 * sp
                w4 += e <= 4 * sp
    m = evaluate_depth(est, gt, mask, sp)
    assert m.count == n
    assert m.mae == pytest.approx(s / n, rel=1e-12) and m.rmse == pytest.approx((s2 / n) ** 0.5, rel=1e-12)
    assert (m.within_1, m.within_2, m.within_4) == pytest.approx((w1 / n, w2 / n, w4 / n))


def test_nonfinite_empty_and_shape():
    g = np.array([[np.inf, 1.0]])
    assert evaluate_depth(np.array([[5.0, 1.5]]), g).mae == 0.5
    m = evaluate_depth(g, g, np.zeros((1, 2), bool))
    assert np.isnan(m.mae) and m.count == 0
    with pytest.raises(InputShapeError):
        evaluate_depth(np.zeros((2, 2)), np.zeros((2, 3)))
    assert "MAE" in evaluate_depth(g, g).format()


def test_final_spacing():
    assert final_spacing((3.0, 7.0)) == pytest.approx(0.02)
