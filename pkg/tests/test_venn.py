import numpy as np
import pytest

from venndec.rng import generator
from venndec.tensor import Tensor
from venndec.venn import (
    MeasurementTensor,
    Region,
    VennDiagram,
    add_measurement_noise,
    diagram_diff,
    intersection_tensor,
    rank_detect,
    reconstruct,
)


def random_diagram(n, m, seed):
    """m distinct nonzero patterns with weights in [0.5, 2]."""
    rng = generator(seed, "diagram")
    seen = set()
    while len(seen) < m:
        p = tuple(int(b) for b in rng.integers(0, 2, size=n))
        if any(p):
            seen.add(p)
    ws = rng.uniform(0.5, 2.0, size=m)
    return VennDiagram(n, tuple(Region(p, w) for p, w in zip(sorted(seen), ws)))


# --- diagram model ------------------------------------------------------------


def test_region_validation():
    with pytest.raises(ValueError, match="0/1"):
        Region((1, 2), 1.0)
    with pytest.raises(ValueError, match="nonnegative"):
        Region((1, 0), -0.5)
    with pytest.raises(ValueError):
        Region((1,), float("nan"))


def test_diagram_validation():
    with pytest.raises(ValueError, match="duplicate"):
        VennDiagram(2, (Region((1, 0), 1.0), Region((1, 0), 2.0)))
    with pytest.raises(ValueError, match="length"):
        VennDiagram(3, (Region((1, 0), 1.0),))
    with pytest.raises(ValueError):
        VennDiagram(0, ())


def test_from_columns_merges_duplicates():
    # columns are (1,1,0), (0,0,1), (1,1,0): first and last collide
    x = np.array([[1, 1, 0], [0, 0, 1], [1, 1, 0]]).T
    with pytest.raises(ValueError, match="duplicate"):
        VennDiagram.from_columns(x, weights=[1.0, 2.0, 3.0])
    v = VennDiagram.from_columns(x, weights=[1.0, 2.0, 3.0], merge_duplicates=True)
    assert v.m == 2
    got = {r.pattern: r.weight for r in v.regions}
    assert got[(1, 1, 0)] == pytest.approx(4.0)
    assert got[(0, 0, 1)] == pytest.approx(2.0)


def test_from_columns_default_unit_weights():
    v = VennDiagram.from_columns(np.array([[1.0], [0.0]]))
    assert v.regions[0].weight == 1.0
    with pytest.raises(ValueError, match="0/1"):
        VennDiagram.from_columns(np.array([[0.5], [0.0]]))


def test_diagram_json_roundtrip():
    v = random_diagram(6, 4, seed=0)
    back = VennDiagram.from_json_dict(v.to_json_dict())
    assert diagram_diff(v, back).exact_match


# --- intersection tensors -------------------------------------------------------


def test_intersection_tensor_hand_example():
    v = VennDiagram(2, (Region((1, 0), 2.0), Region((1, 1), 3.0)))
    t = intersection_tensor(v, 2)
    np.testing.assert_allclose(t.tensor.data, [[5.0, 3.0], [3.0, 3.0]])


def test_intersection_tensor_entry_formula():
    v = random_diagram(5, 4, seed=1)
    t = intersection_tensor(v, 3)
    X, w = v.columns(), v.weights()
    for idx in ((0, 1, 2), (4, 4, 0), (3, 3, 3)):
        expected = float(np.sum(w * X[idx[0]] * X[idx[1]] * X[idx[2]]))
        assert t.tensor.data[idx] == pytest.approx(expected, abs=1e-12)


def test_intersection_tensor_empty_diagram():
    t = intersection_tensor(VennDiagram(4, ()), 3)
    np.testing.assert_array_equal(t.tensor.data, np.zeros((4, 4, 4)))


def test_measurement_tensor_validation():
    with pytest.raises(ValueError, match="cubic"):
        MeasurementTensor(Tensor(np.zeros((2, 3))))
    asym = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError, match="symmetric"):
        MeasurementTensor(Tensor(asym))
    MeasurementTensor(Tensor(asym), epsilon_inf=0.5)  # within the noise allowance
    with pytest.raises(ValueError, match="nonnegative"):
        MeasurementTensor(Tensor(np.zeros((2, 2))), epsilon_inf=-0.1)


def test_add_measurement_noise():
    v = random_diagram(5, 3, seed=2)
    t = intersection_tensor(v, 3)
    assert add_measurement_noise(t, 0.0) is t
    noisy = add_measurement_noise(t, 1e-3, seed=4)
    delta = noisy.tensor.data - t.tensor.data
    assert np.max(np.abs(delta)) <= 1e-3
    assert np.max(np.abs(delta)) > 0.0
    assert noisy.epsilon_inf == pytest.approx(1e-3)
    np.testing.assert_allclose(delta, np.swapaxes(delta, 0, 2), atol=1e-15)
    again = add_measurement_noise(t, 1e-3, seed=4)
    np.testing.assert_array_equal(noisy.tensor.data, again.tensor.data)
    with pytest.raises(ValueError):
        add_measurement_noise(t, -1.0)


def test_rank_detect():
    assert rank_detect(Tensor(np.zeros((3, 3, 3))), 5) == 0
    v = random_diagram(8, 4, seed=3)
    t = intersection_tensor(v, 3).tensor
    assert rank_detect(t, 8) == 4
    assert rank_detect(t, 2) == 2  # cap applies
    with pytest.raises(ValueError):
        rank_detect(t, 0)


# --- reconstruction -------------------------------------------------------------


def test_reconstruct_single_region():
    v = VennDiagram(12, (Region((1, 0) * 6, 5.0),))
    got = reconstruct(intersection_tensor(v, 3))
    assert diagram_diff(v, got).exact_match


def test_reconstruct_empty_diagram():
    got = reconstruct(intersection_tensor(VennDiagram(12, ()), 3))
    assert got.m == 0


def test_reconstruct_split_route_roundtrip():
    v = random_diagram(18, 4, seed=5)
    got = reconstruct(intersection_tensor(v, 3), m_max=6)
    d = diagram_diff(v, got)
    assert d.exact_match, d.to_json_dict()


def test_reconstruct_full_route_roundtrip():
    # 8 regions exceed the 6x6x6 split subtensor's capacity at n=18
    v = random_diagram(18, 8, seed=6)
    got = reconstruct(intersection_tensor(v, 3), m_max=8)
    d = diagram_diff(v, got)
    assert d.exact_match, d.to_json_dict()


def test_reconstruct_rejects_rounding_ambiguity():
    chi = np.array([1.0, 0.5, 1.0, 1.0])
    data = 2.0 * np.einsum("i,j,k->ijk", chi, chi, chi)
    with pytest.raises(ValueError, match="ambiguity"):
        reconstruct(MeasurementTensor(Tensor(data)), m_max=1)


def test_reconstruct_rejects_low_order_and_bad_m_max():
    v = random_diagram(4, 2, seed=7)
    with pytest.raises(ValueError, match="order"):
        reconstruct(intersection_tensor(v, 2))
    with pytest.raises(ValueError, match="m_max"):
        reconstruct(intersection_tensor(random_diagram(6, 2, seed=8), 3), m_max=0)


def test_reconstruct_noisy_weights_close():
    v = random_diagram(18, 3, seed=9)
    noisy = add_measurement_noise(intersection_tensor(v, 3), 1e-8, seed=10)
    got = reconstruct(noisy, m_max=3)
    d = diagram_diff(v, got)
    assert not d.only_in_first and not d.only_in_second
    assert d.weight_l1 <= 1e-4


# --- diffs ----------------------------------------------------------------------


def test_diagram_diff_cases():
    a = VennDiagram(2, (Region((1, 0), 1.0), Region((0, 1), 2.0)))
    b = VennDiagram(2, (Region((1, 0), 1.0), Region((1, 1), 3.0)))
    d = diagram_diff(a, b)
    assert not d.exact_match
    assert d.only_in_first == ((0, 1),)
    assert d.only_in_second == ((1, 1),)
    assert d.weight_l1 == pytest.approx(5.0)

    c = VennDiagram(2, (Region((1, 0), 1.0 + 1e-9), Region((0, 1), 2.0)))
    assert diagram_diff(a, c).exact_match  # weights within tolerance
    assert not diagram_diff(a, c, weight_tol=1e-12).exact_match

    with pytest.raises(ValueError, match="set count"):
        diagram_diff(a, VennDiagram(3, ()))


def test_diagram_diff_json():
    a = VennDiagram(1, (Region((1,), 1.0),))
    obj = diagram_diff(a, VennDiagram(1, ())).to_json_dict()
    assert obj == {
        "exact_match": False,
        "weight_l1": 1.0,
        "only_in_first": [[1]],
        "only_in_second": [],
    }
