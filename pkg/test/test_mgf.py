import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from errors import ContractViolation
from data_types.enums import BRANCH, FUSION
from data_types.run_config import MgfConfig
from logic.mgf import mgf_face_forward, mgf_mouth_forward, MgfParams

CFG = MgfConfig(projected_dim=4, hidden_width=5, hidden_layers=2, head_init_scale=0.5)
DIM_S, DIM_A, DIM_E = 6, 3, 2


def network(branch: BRANCH, fusion: FUSION = FUSION.GATED, seed: int = 0) -> MgfParams:
    return MgfParams(branch, CFG, DIM_S, DIM_A, DIM_E if branch == BRANCH.FACE else 0, seed=seed, fusion=fusion)


def inputs(seed: int = 0, n: int = 4):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, DIM_S)), rng.normal(size=DIM_A), rng.normal(size=DIM_E)


def test_zero_gate_gives_half_modulation():
    params = network(BRANCH.MOUTH)
    params.params["gate.W"][:] = 0.0
    params.params["gate.b"][:] = 0.0
    f_s, f_a, _ = inputs()
    _, cache = params.forward(f_s, f_a)
    assert_allclose(cache.omega, 0.5)
    assert_allclose(cache.fused[:, CFG.projected_dim:], 0.5 * np.repeat(cache.a_proj, len(f_s), axis=0))


def test_closed_mouth_gate_ignores_audio():
    params = network(BRANCH.MOUTH)
    params.params["gate.W"][:] = 0.0
    params.params["gate.b"][:] = -20.0
    f_s, f_a, _ = inputs()
    base = mgf_mouth_forward(params, f_s, f_a)
    moved = mgf_mouth_forward(params, f_s, f_a + 5.0)
    assert np.max(np.abs(base - moved)) < 1e-8


def test_closed_face_gate_cuts_the_gated_audio_copy():
    params = network(BRANCH.FACE)
    params.params["gate.W"][:] = 0.0
    params.params["gate.b"][:] = -20.0
    f_s, f_a, f_e = inputs()
    base = np.concatenate(mgf_face_forward(params, f_s, f_a, f_e), axis=1)
    params.params["proj_a.W"] += 3.0
    params.params["proj_a.b"] -= 2.0
    moved = np.concatenate(mgf_face_forward(params, f_s, f_a, f_e), axis=1)
    assert np.max(np.abs(base - moved)) < 1e-8


def test_zero_face_head_emits_its_bias():
    params = network(BRANCH.FACE)
    params.params["head.out.W"][:] = 0.0
    params.params["head.out.b"][:] = np.arange(10.0)
    d_mu, d_s, d_q = mgf_face_forward(params, *inputs())
    assert_allclose(d_mu, np.tile([0.0, 1.0, 2.0], (4, 1)))
    assert_allclose(d_s, np.tile([3.0, 4.0, 5.0], (4, 1)))
    assert_allclose(d_q, np.tile([6.0, 7.0, 8.0, 9.0], (4, 1)))


def test_output_widths():
    f_s, f_a, f_e = inputs()
    assert mgf_mouth_forward(network(BRANCH.MOUTH), f_s, f_a).shape == (4, 3)
    assert [a.shape for a in mgf_face_forward(network(BRANCH.FACE), f_s, f_a, f_e)] == [(4, 3), (4, 3), (4, 4)]


def test_dimension_mismatch_raises():
    f_s, f_a, f_e = inputs()
    with pytest.raises(ContractViolation):
        network(BRANCH.MOUTH).forward(f_s[:, :3], f_a)
    with pytest.raises(ContractViolation):
        network(BRANCH.FACE).forward(f_s, f_a, np.zeros(5))
    with pytest.raises(ContractViolation):
        mgf_face_forward(network(BRANCH.MOUTH), f_s, f_a, f_e)


def test_concat_fusion_has_no_gate():
    params = network(BRANCH.MOUTH, FUSION.CONCAT)
    assert "gate.W" not in params.params
    f_s, f_a, _ = inputs()
    _, cache = params.forward(f_s, f_a)
    assert cache.omega is None


@settings(max_examples=40)
@given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=-5.0, max_value=5.0))
def test_gate_is_bounded_and_attenuates(seed, shift):
    params = network(BRANCH.FACE, seed=seed % 7)
    f_s, f_a, f_e = inputs(seed)
    _, cache = params.forward(f_s, f_a + shift, f_e - shift)
    assert np.all((cache.omega > 0.0) & (cache.omega < 1.0))
    gated = cache.fused[0, DIM_A:DIM_A + CFG.projected_dim]
    assert np.all(np.abs(gated) <= np.abs(cache.a_proj[0]))


@pytest.mark.parametrize("branch", [BRANCH.MOUTH, BRANCH.FACE])
@pytest.mark.parametrize("fusion", [FUSION.GATED, FUSION.CONCAT])
def test_gradients_match_finite_differences(branch, fusion):
    params = network(branch, fusion, seed=3)
    f_s, f_a, f_e = inputs(5)
    weights = np.random.default_rng(9).normal(size=(len(f_s), params.out_dim))

    def objective(spatial=f_s):
        out, _ = params.forward(spatial, f_a, f_e)
        return np.sum(out * weights)

    _, cache = params.forward(f_s, f_a, f_e)
    grads, d_f_s = params.backward(cache, weights)
    h = 1e-6
    rng = np.random.default_rng(0)
    for name, arr in params.params.items():
        for flat in rng.choice(arr.size, size=min(3, arr.size), replace=False):
            index = np.unravel_index(flat, arr.shape)
            original = arr[index]
            arr[index] = original + h
            up = objective()
            arr[index] = original - h
            down = objective()
            arr[index] = original
            assert grads[name][index] == pytest.approx((up - down) / (2 * h), rel=1e-3, abs=1e-7), name
    for i, j in [(0, 0), (2, 5), (3, 1)]:
        plus, minus = f_s.copy(), f_s.copy()
        plus[i, j] += h
        minus[i, j] -= h
        assert d_f_s[i, j] == pytest.approx((objective(plus) - objective(minus)) / (2 * h), rel=1e-3, abs=1e-7)
