import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duqfl.statevector import (
    CX,
    GATE_KINDS,
    H,
    RY,
    RZ,
    P,
    X,
    Gate,
    InvalidStateError,
    ShotConfig,
    Statevector,
    apply_gate,
    dense_unitary,
    embed_operator,
    gate_matrix,
    parity_expectation,
    run_circuit,
    sample_parity,
)

S = 1 / np.sqrt(2)


def bell():
    return run_circuit([H(0), CX(0, 1)], 2)


class TestGates:
    @pytest.mark.parametrize("kind", GATE_KINDS)
    @pytest.mark.parametrize("angle", [0.0, 0.3, -2.1, np.pi])
    def test_unitary(self, kind, angle):
        m = gate_matrix(kind, angle)
        np.testing.assert_allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=1e-12)

    def test_hadamard_on_zero(self):
        out = apply_gate(Statevector.zero(1), H(0))
        np.testing.assert_allclose(out.amplitudes, [S, S], atol=1e-15)

    def test_cx_flips_target_when_control_set(self):
        # qubit 0 set -> basis index 1; CX(0, 1) sets qubit 1 too -> index 3
        out = apply_gate(Statevector.basis(2, 1), CX(0, 1))
        np.testing.assert_allclose(out.amplitudes, [0, 0, 0, 1])

    def test_cx_idle_when_control_clear(self):
        out = apply_gate(Statevector.basis(2, 2), CX(0, 1))
        np.testing.assert_allclose(out.amplitudes, [0, 0, 1, 0])

    def test_ry_quarter_turn(self):
        out = apply_gate(Statevector.zero(1), RY(0, np.pi / 2))
        np.testing.assert_allclose(out.amplitudes, [np.cos(np.pi / 4), np.sin(np.pi / 4)], atol=1e-15)

    def test_qubit_zero_is_least_significant(self):
        out = apply_gate(Statevector.zero(3), X(0))
        assert np.argmax(np.abs(out.amplitudes)) == 1
        out = apply_gate(Statevector.zero(3), X(2))
        assert np.argmax(np.abs(out.amplitudes)) == 4

    def test_targets_override(self):
        out = apply_gate(Statevector.zero(2), X(0), targets=[1])
        np.testing.assert_allclose(out.amplitudes, [0, 0, 1, 0])

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            apply_gate(Statevector.zero(2), H(2))

    def test_duplicate_control_target(self):
        with pytest.raises(ValueError):
            CX(1, 1)
        with pytest.raises(ValueError):
            apply_gate(Statevector.zero(2), CX(0, 1), targets=[0, 0])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Gate("Y", (0,))


class TestStatevector:
    def test_rejects_unnormalized(self):
        with pytest.raises(InvalidStateError):
            Statevector([1.0, 1.0])

    def test_rejects_wrong_length(self):
        with pytest.raises(InvalidStateError):
            Statevector([1.0, 0.0, 0.0], n_qubits=2)

    def test_zero_state(self):
        sv = Statevector.zero(3)
        assert sv.amplitudes.size == 8 and sv.norm() == 1.0


class TestParity:
    def test_even_basis(self):
        assert parity_expectation(Statevector.basis(2, 0)) == 1.0

    def test_odd_basis(self):
        # |01>: one qubit set
        assert parity_expectation(Statevector.basis(2, 1)) == -1.0

    def test_bell(self):
        assert parity_expectation(bell()) == pytest.approx(1.0, abs=1e-15)

    def test_exact_mode_sampling(self):
        assert sample_parity(bell(), ShotConfig("exact")) == pytest.approx(1.0, abs=1e-15)

    def test_point_mass_sampled(self):
        for shots in (1, 7, 1000):
            assert sample_parity(Statevector.zero(2), ShotConfig("sampled", shots, 3)) == 1.0

    def test_sampled_balanced_state(self):
        state = Statevector([S, S, 0, 0])
        shots = 10**5
        for seed in range(5):
            value = sample_parity(state, ShotConfig("sampled", shots, seed))
            assert abs(value) <= 3 / np.sqrt(shots)

    def test_sampled_deterministic(self):
        state = run_circuit([RY(0, 1.1), H(1), CX(1, 0)], 2)
        cfg = ShotConfig("sampled", 500, 42)
        assert sample_parity(state, cfg) == sample_parity(state, cfg)

    def test_zero_shots_rejected(self):
        with pytest.raises(ValueError):
            ShotConfig("sampled", 0, 0)

    def test_sampled_parity_unbiased(self):
        state = run_circuit([RY(0, 0.9), RY(1, 2.2), CX(0, 1), RZ(1, 0.4)], 2)
        exact = parity_expectation(state)
        shots, seeds = 10**4, 200
        est = [sample_parity(state, ShotConfig("sampled", shots, s)) for s in range(seeds)]
        sigma = np.sqrt((1 - exact**2) / shots / seeds)
        assert abs(np.mean(est) - exact) < 4 * sigma


def _random_gates(draw_kinds, draw_qubits, angles, n):
    gates = []
    for kind, (a, b), angle in zip(draw_kinds, draw_qubits, angles):
        a, b = a % n, b % n
        if kind == "CX":
            if n < 2:
                continue
            if a == b:
                b = (a + 1) % n
            gates.append(CX(a, b))
        elif kind in ("RY", "RZ", "P"):
            gates.append(Gate(kind, (a,), angle))
        else:
            gates.append(Gate(kind, (a,)))
    return gates


gate_lists = st.integers(1, 6).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(st.sampled_from(GATE_KINDS), min_size=1, max_size=200),
        st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=200, max_size=200),
        st.lists(st.floats(-2 * np.pi, 2 * np.pi), min_size=200, max_size=200),
    )
)


@settings(max_examples=60, deadline=None)
@given(gate_lists)
def test_norm_preserved(args):
    n, kinds, qubits, angles = args
    state = run_circuit(_random_gates(kinds, qubits, angles, n), n)
    assert abs(state.norm() - 1.0) < 1e-9


small_lists = st.integers(1, 4).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(st.sampled_from(GATE_KINDS), min_size=1, max_size=12),
        st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=12, max_size=12),
        st.lists(st.floats(-2 * np.pi, 2 * np.pi), min_size=12, max_size=12),
    )
)


@settings(max_examples=100, deadline=None)
@given(small_lists)
def test_kernel_matches_dense_operator(args):
    n, kinds, qubits, angles = args
    gates = _random_gates(kinds, qubits, angles, n)
    state = run_circuit(gates, n)
    dense = dense_unitary(gates, n)[:, 0]
    assert np.max(np.abs(state.amplitudes - dense)) < 1e-10


def test_dense_cx_matrix_by_hand():
    # CX(control=0, target=1) on 2 qubits, basis order |q1 q0>
    expected = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]])
    np.testing.assert_array_equal(embed_operator(gate_matrix("CX"), (0, 1), 2), expected)


def test_phase_gate_on_one():
    out = apply_gate(Statevector.basis(1, 1), P(0, np.pi / 3))
    np.testing.assert_allclose(out.amplitudes, [0, np.exp(1j * np.pi / 3)])
