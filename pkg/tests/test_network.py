import numpy as np
import pytest

from helpers import random_formula, random_trace
from stlmine.autodiff import Parameter
from stlmine.checkpoint import load_model, model_from_dict, model_to_dict, save_model
from stlmine.formula import (
    Atom,
    Hist,
    Mask,
    Not,
    Once,
    formula_length,
    format_formula,
    parse_formula,
)
from stlmine.network import (
    AtomCell,
    ChoiceBlock,
    HistCell,
    IntervalCell,
    Model,
    OnceCell,
    SinceCell,
    build_bounded,
    build_fixed_length,
    build_from_formula,
    build_up_to_length,
    embedded_structures,
    enumerate_extractions,
    extract_formula,
    forward_batch,
    forward_model,
    interval_cell_forward,
    max_extraction_length,
    normalize_batch,
)
from stlmine.semantics import boolean_eval, robustness, robustness_recurrent


class TestHardwired:
    def test_hist_example_identity_head(self):
        m = build_from_formula(parse_formula("G (x0 <= 0.5)"), 1)
        out, _ = forward_model(m, np.array([[0.2], [0.4], [0.3]]))
        assert abs(out - 0.1) < 1e-12

    def test_tanh_head(self):
        m = build_from_formula(parse_formula("G (x0 <= 0.5)"), 1)
        m.head = "tanh"
        out, _ = forward_model(m, np.array([[0.2], [0.4], [0.3]]))
        assert abs(out - np.tanh(0.1)) < 1e-12

    @pytest.mark.parametrize("wrap", [False, True])
    def test_matches_recurrent_monitor(self, wrap):
        rng = np.random.default_rng(0)
        for _ in range(25):
            f = random_formula(rng, int(rng.integers(1, 4)), 2)
            x = random_trace(rng, int(rng.integers(1, 15)), 2)
            m = build_from_formula(f, 2, wrap_choices=wrap)
            out, _ = forward_model(m, x)
            want = robustness_recurrent(f, x)[-1]
            assert abs(out - want) <= 1e-9

    def test_extraction_returns_same_classifier(self):
        rng = np.random.default_rng(1)
        f = random_formula(rng, 2, 1, ops=("not", "and", "or", "once", "hist"))
        m = build_from_formula(f, 1, wrap_choices=True)
        g = extract_formula(m)
        x = random_trace(rng, 10, 1)
        np.testing.assert_allclose(robustness(g, x), robustness(f, x), atol=1e-12)

    def test_bounded_mask_rejected(self):
        with pytest.raises(ValueError, match="unbounded"):
            build_from_formula(parse_formula("F[0,2] (x0 >= 0)"), 1)


class TestBuilders:
    @pytest.mark.parametrize("L", [2, 3, 4, 5, 6])
    def test_fixed_length_bounds(self, L):
        m = build_fixed_length(L, 1, rng=np.random.default_rng(L))
        assert max_extraction_length(m) == L

    @pytest.mark.parametrize("L", [2, 3, 4])
    def test_all_assignments_within_budget(self, L):
        m = build_fixed_length(L, 1, rng=np.random.default_rng(L))
        lengths = {formula_length(f) for f in enumerate_extractions(m, include_negative=True)}
        assert max(lengths) == L

    def test_no_since_variant(self):
        m = build_fixed_length(6, 1, use_since=False, rng=np.random.default_rng(0))
        assert not any(isinstance(c, SinceCell) for c in m.cells)
        m2 = build_fixed_length(6, 1, use_since=True, rng=np.random.default_rng(0))
        assert any(isinstance(c, SinceCell) for c in m2.cells)

    def test_length6_has_many_choice_blocks(self):
        m = build_fixed_length(6, 1, rng=np.random.default_rng(0))
        n_blocks = sum(isinstance(c, ChoiceBlock) for c in m.cells)
        assert n_blocks >= 5
        assert embedded_structures(m) >= 2**n_blocks  # every block has >= 2 inputs

    def test_unsupported_length(self):
        with pytest.raises(ValueError):
            build_fixed_length(1, 1)

    def test_both_atom_directions_offered(self):
        m = build_fixed_length(2, 1, rng=np.random.default_rng(3))
        atoms = [c for c in m.cells if isinstance(c, AtomCell)]
        signs = {np.sign(c.weights[0].value) for c in atoms}
        assert signs == {-1.0, 1.0}

    def test_multifeature_atoms(self):
        m = build_fixed_length(2, 3, rng=np.random.default_rng(4))
        atoms = [c for c in m.cells if isinstance(c, AtomCell)]
        assert len(atoms) == 6  # one per feature per direction
        assert all(len(c.weights) == 3 for c in atoms)


class TestStructureCount:
    def test_binary_chain_embeds_2_to_the_n(self):
        # A chain of N binary choice blocks {Once(prev), Hist(prev)} yields
        # exactly 2^N distinct formulas over the joint hard assignments.
        N = 5
        rng = np.random.default_rng(0)
        cells = [AtomCell([Parameter(1.0)], Parameter(float(rng.uniform(-1, 1))))]
        prev = 0
        for _ in range(N):
            cells.append(OnceCell(prev))
            once_id = len(cells) - 1
            cells.append(HistCell(prev))
            hist_id = len(cells) - 1
            cells.append(
                ChoiceBlock([once_id, hist_id], [Parameter(0.5), Parameter(0.5)])
            )
            prev = len(cells) - 1
        m = Model(cells, prev, 1)
        assert embedded_structures(m) == 2**N
        outcomes = enumerate_extractions(m)
        assert len(outcomes) == 2**N
        assert len(set(outcomes)) == 2**N

    def test_builder_enumeration_distinct_and_bounded(self):
        # Tree-shaped builders: blocks off the selected path collapse, so
        # the number of distinct extractions is below the joint-assignment
        # capacity but every reachable outcome is distinct.
        m = build_fixed_length(3, 1, rng=np.random.default_rng(7))
        outcomes = enumerate_extractions(m)
        assert len(set(outcomes)) == len(outcomes)
        assert len(outcomes) <= embedded_structures(m)


class TestExtraction:
    def test_negative_choice_wraps_not_then_normalizes(self):
        # W = [0.3, -0.9] over {Once(a), Hist(a)}: the quantizer selects the
        # Hist branch with sign -1; the Not is absorbed as Once over the
        # flipped atom.
        a = AtomCell([Parameter(0.7)], Parameter(-0.2))
        cells = [a, OnceCell(0), HistCell(0),
                 ChoiceBlock([1, 2], [Parameter(0.3), Parameter(-0.9)])]
        m = Model(cells, 3, 1)
        f = extract_formula(m)
        assert f == Once(Atom((-0.7,), 0.2))

    def test_denormalization_example(self):
        # w_norm = -1, b_norm = 0.5 with feature range [0, 2]:
        # w_raw = -0.5, b_raw = 0.5, printed threshold 1.0.
        a = AtomCell([Parameter(-1.0)], Parameter(0.5))
        m = Model([a], 0, 1, normalization=(np.array([0.0]), np.array([2.0])))
        f = extract_formula(m)
        assert f == Atom((-0.5,), 0.5)
        assert format_formula(f) == "x0 <= 1.0"
        # sign-equal on sampled raw points
        rng = np.random.default_rng(0)
        for x in rng.uniform(-1, 3, 50):
            raw = f.weights[0] * x + f.bias
            norm = -1.0 * ((x - 0.0) / 2.0) + 0.5
            assert (raw >= 0) == (norm >= 0)

    def test_interval_mask_from_weight_signs(self):
        ws = [Parameter(v) for v in [-1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0]]
        cells = [AtomCell([Parameter(1.0)], Parameter(-0.42)), IntervalCell("hist", 0, 6, ws)]
        m = Model(cells, 1, 1)
        f = extract_formula(m)
        assert f == Hist(Atom((1.0,), -0.42), Mask((1, 2, 3)))
        assert format_formula(f) == "G[1,3] (x0 >= 0.42)"

    def test_empty_mask_falls_back_to_argmax(self):
        ws = [Parameter(v) for v in [-3.0, -0.5, -2.0]]
        cells = [AtomCell([Parameter(1.0)], Parameter(0.0)), IntervalCell("once", 0, 2, ws)]
        m = Model(cells, 1, 1)
        assert extract_formula(m) == Once(Atom((1.0,), 0.0), Mask((1,)))

    def test_sign_agreement_with_forward(self):
        rng = np.random.default_rng(11)
        for L in (2, 3, 4):
            m = build_fixed_length(L, 2, rng=rng)
            X = rng.uniform(-1, 1, size=(12, 8, 2))
            m.normalization = (X.min(axis=(0, 1)), X.max(axis=(0, 1)))
            m.head = "tanh"
            f = extract_formula(m)
            outs, _, _ = forward_batch(m, normalize_batch(m, X))
            for xi, oi in zip(X, outs):
                rho = robustness(f, xi)[-1]
                assert (rho >= 0) == (oi >= 0)


class TestIntervalCell:
    def test_raw_once_example(self):
        assert interval_cell_forward("once", [0.2, 0.7, 0.1], [1.0, -1.0, 1.0]) == 0.2

    def test_raw_hist_example(self):
        assert interval_cell_forward("hist", [0.2, 0.7, 0.1], [1.0, -1.0, 1.0]) == 0.1

    def test_all_kept_reduces_to_fold(self):
        r = [0.5, 0.3, 0.9]
        assert interval_cell_forward("once", r, [1.0, 1.0, 1.0]) == 0.9
        assert interval_cell_forward("hist", r, [1.0, 1.0, 1.0]) == 0.3

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            interval_cell_forward("once", [-0.1, 0.2], [1.0, 1.0])

    def test_model_forward_equals_masked_formula(self):
        # With a non-empty mask the shift cancels exactly, so the cell
        # computes the masked operator's true robustness at the last step.
        rng = np.random.default_rng(2)
        for kind in ("once", "hist"):
            for _ in range(20):
                window = int(rng.integers(1, 7))
                ws = [Parameter(float(rng.choice([-1.0, 1.0]))) for _ in range(window + 1)]
                if all(w.value < 0 for w in ws):
                    ws[0].value = 1.0
                atom = AtomCell([Parameter(float(rng.uniform(-2, 2)))],
                                Parameter(float(rng.uniform(-1, 1))))
                m = Model([atom, IntervalCell(kind, 0, window, ws)], 1, 1, head="identity")
                T = window + 1 + int(rng.integers(0, 4))
                x = random_trace(rng, T, 1)
                out, _ = forward_model(m, x)
                f = extract_formula(m)
                # mask offsets index the past from the final step
                want = robustness(f, x)[-1]
                assert abs(out - want) <= 1e-9

    def test_interval_cell_must_be_output(self):
        from stlmine.network import NotCell

        cells = [
            AtomCell([Parameter(1.0)], Parameter(0.0)),
            IntervalCell("hist", 0, 2, [Parameter(1.0), Parameter(1.0), Parameter(1.0)]),
            NotCell(1),
        ]
        m = Model(cells, 2, 1)
        with pytest.raises(ValueError, match="output"):
            forward_model(m, np.zeros((4, 1)))

    def test_window_longer_than_trace_rejected(self):
        m = build_bounded(6, 1, rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="window"):
            forward_model(m, np.zeros((3, 1)))


class TestUpToLength:
    def test_final_choice_selects_subnetwork(self):
        m = build_up_to_length(4, 1, rng=np.random.default_rng(5))
        final = m.cells[m.output]
        assert isinstance(final, ChoiceBlock)
        assert len(final.inputs) == 3  # lengths 2, 3, 4
        # force the length-2 branch and compare with its own extraction
        for i, w in enumerate(final.weights):
            w.value = 1.0 if i == 0 else 0.0
        sub = Model(m.cells, final.inputs[0], 1, normalization=m.normalization)
        assert extract_formula(m) == extract_formula(sub)

    def test_extraction_length_bound(self):
        m = build_up_to_length(6, 1, rng=np.random.default_rng(6))
        assert max_extraction_length(m) == 6

    def test_subnetworks_share_atoms(self):
        m = build_up_to_length(5, 1, rng=np.random.default_rng(7))
        final = m.cells[m.output]

        def atom_ids(cid, seen):
            cell = m.cells[cid]
            if id(cell) in seen:
                return set()
            seen.add(id(cell))
            if isinstance(cell, AtomCell):
                return {cid}
            kids = [v for k, v in vars(cell).items() if k in ("child", "left", "right")]
            if isinstance(cell, ChoiceBlock):
                kids = cell.inputs
            out = set()
            for k in kids:
                out |= atom_ids(k, seen)
            return out

        branches = [atom_ids(i, set()) for i in final.inputs]
        # the pass-chain nests, so every longer branch reuses the shorter
        # branch's atom cells (shared by identity, not copies)
        assert branches[0] <= branches[1] <= branches[2]


class TestBooleanSpecialCase:
    def test_model_outputs_pm1(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            f = random_formula(
                rng, int(rng.integers(1, 4)), 2, ops=("not", "and", "or", "once", "hist", "since")
            )
            f = _identity_atoms(f, rng)
            m = build_from_formula(f, 2)
            x = np.where(rng.random((int(rng.integers(1, 9)), 2)) < 0.5, -1.0, 1.0)
            out, _ = forward_model(m, x)
            assert out in (-1.0, 1.0)
            assert int(out) == boolean_eval(f, x)


def _identity_atoms(f, rng):
    """Replace every atom with a +/-1-preserving feature reader."""
    from stlmine.formula import And, Or, Since

    if isinstance(f, Atom):
        which = int(rng.integers(2))
        w = [0.0, 0.0]
        w[which] = 1.0
        return Atom(tuple(w), 0.0)
    if isinstance(f, Not):
        return Not(_identity_atoms(f.child, rng))
    if isinstance(f, And):
        return And(_identity_atoms(f.left, rng), _identity_atoms(f.right, rng))
    if isinstance(f, Or):
        return Or(_identity_atoms(f.left, rng), _identity_atoms(f.right, rng))
    if isinstance(f, Once):
        return Once(_identity_atoms(f.child, rng), f.mask)
    if isinstance(f, Hist):
        return Hist(_identity_atoms(f.child, rng), f.mask)
    if isinstance(f, Since):
        return Since(_identity_atoms(f.left, rng), _identity_atoms(f.right, rng), f.mask)
    raise TypeError(f)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        m = build_fixed_length(4, 2, rng=np.random.default_rng(13))
        for i, p in enumerate(m.parameters()):
            p.m = 0.001 * i
            p.v = 0.002 * i
            p.step = i
        m.normalization = (np.array([0.0, -1.0]), np.array([2.0, 1.0]))
        path = tmp_path / "m.json"
        save_model(m, path)
        back = load_model(path)
        assert model_to_dict(back) == model_to_dict(m)
        save_model(back, tmp_path / "m2.json")
        assert (tmp_path / "m2.json").read_bytes() == path.read_bytes()

    def test_version_check(self):
        doc = model_to_dict(build_fixed_length(2, 1))
        doc["version"] = 99
        with pytest.raises(ValueError, match="version"):
            model_from_dict(doc)

    def test_interval_model_round_trip(self, tmp_path):
        m = build_bounded(6, 1, rng=np.random.default_rng(14))
        _ = forward_model(m, np.arange(7.0).reshape(-1, 1))
        save_model(m, tmp_path / "i.json")
        back = load_model(tmp_path / "i.json")
        assert model_to_dict(back) == model_to_dict(m)
