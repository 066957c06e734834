import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panelmix.panel import (
    PanelError,
    PanelSchema,
    build_conditioning_set,
    forward_difference,
    load_panel,
    panel_from_arrays,
    validate_identification,
)


def _csv(rows, header="id,time,y"):
    return header + "\n" + "\n".join(rows) + "\n"


def make_complete_csv(N=3, T=6, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(N):
        for t in range(T + 2):
            rows.append(f"{i},{t},{rng.standard_normal():.6f}")
    return _csv(rows)


class TestLoadPanel:
    def test_complete_panel_windows(self):
        # 7 post-initial periods (t = 0..7), estimation horizon T = 6
        data = load_panel(make_complete_csv(N=3, T=6), PanelSchema())
        assert data.N == 3
        assert data.T == 6
        assert np.all(data.t0 == 1)
        assert np.all(data.t1 == 6)

    def test_missing_interior_y_no_lag(self):
        # y missing at t=3 only: runs [1,2] and [4,6]; longer run wins
        schema = PanelSchema(lag_outcome=False)
        rows = []
        for t in range(8):
            rows.append(f"0,{t}," + ("" if t == 3 else "1.0"))
        data = load_panel(_csv(rows), schema, T=6)
        assert (data.t0[0], data.t1[0]) == (4, 6)

    def test_missing_interior_y_with_lag_breaks_next_transition(self):
        # with the lagged outcome, t=4 also needs y_3: runs [1,2], [5,6]; tie -> later
        rows = []
        for t in range(8):
            rows.append(f"0,{t}," + ("" if t == 3 else "1.0"))
        data = load_panel(_csv(rows), PanelSchema(), T=6)
        assert (data.t0[0], data.t1[0]) == (5, 6)

    def test_empty_stream_rejected(self):
        with pytest.raises(PanelError, match="no rows"):
            load_panel("id,time,y\n", PanelSchema())
        with pytest.raises(PanelError, match="no rows"):
            load_panel("", PanelSchema())

    def test_duplicate_id_time_rejected_with_row(self):
        text = _csv(["0,0,1.0", "0,1,2.0", "0,1,3.0"])
        with pytest.raises(PanelError, match=r"row 4"):
            load_panel(text, PanelSchema())

    def test_short_window_flagged_not_fatal(self):
        # one usable transition = d_w, strictly more required
        text = _csv(["0,0,1.0", "0,1,2.0"])
        data = load_panel(text, PanelSchema(), T=1)
        report = validate_identification(data)
        assert not report.unit_pass[0]
        assert 0 in report.failing_units

    def test_wide_layout_matches_long(self):
        long = load_panel(make_complete_csv(N=2, T=3, seed=4), PanelSchema(), T=3)
        header = "id," + ",".join(f"y_{t}" for t in range(5))
        rows = []
        for i in range(2):
            vals = ",".join(repr(float(v)) for v in long.y[i])
            rows.append(f"{i},{vals}")
        wide = load_panel(_csv(rows, header=header), PanelSchema(layout="wide"), T=3)
        np.testing.assert_allclose(wide.y, long.y)

    def test_comment_lines_skipped(self):
        text = "# provenance line\n" + make_complete_csv(N=1, T=2)
        data = load_panel(text, PanelSchema(), T=2)
        assert data.N == 1

    def test_holdout_not_in_estimation_view(self):
        data = load_panel(make_complete_csv(N=2, T=3), PanelSchema(), T=3)
        y, _, _ = data.estimation_view()
        assert np.isnan(y[:, 4]).all()
        assert np.isfinite(data.y[:, 4]).all()


class TestConditioningSet:
    def test_initial_outcome_selector(self):
        data = load_panel(make_complete_csv(N=4, T=3, seed=1), PanelSchema(), T=3)
        cond = build_conditioning_set(data, ("y0",), standardize=False)
        np.testing.assert_allclose(cond.values[:, 0], data.y[:, 0])

    def test_standardize_population_convention(self):
        y = np.zeros((2, 4))
        y[0, 0], y[1, 0] = 0.0, 2.0
        y[:, 1:] = 1.0
        data = panel_from_arrays(y)
        cond = build_conditioning_set(data, ("y0",), standardize=True)
        np.testing.assert_allclose(cond.values[:, 0], [-1.0, 1.0])

    def test_empty_selector_rejected(self):
        data = panel_from_arrays(np.ones((2, 4)))
        with pytest.raises(PanelError, match="empty"):
            build_conditioning_set(data, ())

    def test_zero_variance_rejected(self):
        data = panel_from_arrays(np.ones((3, 4)))
        with pytest.raises(PanelError, match="zero variance"):
            build_conditioning_set(data, ("y0",), standardize=True)

    def test_roundtrip_raw(self):
        rng = np.random.default_rng(3)
        y = rng.standard_normal((5, 4))
        data = panel_from_arrays(y)
        cond = build_conditioning_set(data, ("y0",), standardize=True)
        np.testing.assert_allclose(cond.raw()[:, 0], y[:, 0], atol=1e-12)


class TestForwardDifference:
    def test_hand_example(self):
        # w = 1, window (1,3), y = (1,2,3): y~_1 = 1 - (2+3)/2 = -1.5
        y = np.array([[0.0, 1.0, 2.0, 3.0, np.nan]])
        data = panel_from_arrays(y, x=np.zeros((1, 4, 0)), w=np.ones((1, 4, 1)))
        fd = forward_difference(data)
        assert fd.t_index[0].tolist() == [1, 2]
        np.testing.assert_allclose(fd.rows_y[0][0], -1.5)

    def test_constant_outcome_annihilated(self):
        y = np.full((1, 5), 7.0)
        data = panel_from_arrays(y, x=np.zeros((1, 4, 0)), w=np.ones((1, 4, 1)))
        fd = forward_difference(data)
        np.testing.assert_allclose(fd.rows_y[0], 0.0, atol=1e-12)

    def test_window_equal_dw_no_rows(self):
        y = np.array([[0.0, 1.0, np.nan, np.nan, np.nan]])
        data = panel_from_arrays(y, x=np.zeros((1, 4, 0)), w=np.ones((1, 4, 1)))
        fd = forward_difference(data)
        assert fd.rows_y[0].size == 0

    def test_heterogeneous_term_annihilated(self):
        # y = lam'w exactly (no noise): differenced outcome is 0
        rng = np.random.default_rng(5)
        N, T, dw = 4, 7, 2
        w = np.concatenate([np.ones((N, T + 1, 1)), rng.standard_normal((N, T + 1, 1))], axis=2)
        lam = rng.standard_normal((N, dw))
        y = np.empty((N, T + 2))
        y[:, 0] = 0.0
        for t in range(1, T + 2):
            y[:, t] = np.einsum("nd,nd->n", lam, w[:, t - 1])
        data = panel_from_arrays(y, x=np.zeros((N, T + 1, 0)), w=w)
        fd = forward_difference(data)
        for i in range(N):
            np.testing.assert_allclose(fd.rows_y[i], 0.0, atol=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 100))
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        T = 6
        y1 = rng.standard_normal((2, T + 2))
        y2 = rng.standard_normal((2, T + 2))
        w = np.abs(rng.standard_normal((2, T + 1, 1))) + 0.5
        x0 = np.zeros((2, T + 1, 0))
        f1 = forward_difference(panel_from_arrays(y1, x=x0, w=w))
        f2 = forward_difference(panel_from_arrays(y2, x=x0, w=w))
        f12 = forward_difference(panel_from_arrays(a * y1 + b * y2, x=x0, w=w))
        for i in range(2):
            np.testing.assert_allclose(
                f12.rows_y[i], a * f1.rows_y[i] + b * f2.rows_y[i], atol=1e-12 * (1 + abs(a) + abs(b))
            )


class TestValidateIdentification:
    def test_intercept_only_passes_with_two_transitions(self):
        y = np.array([[0.0, 1.0, 2.0, np.nan, np.nan]])
        data = panel_from_arrays(y, x=np.zeros((1, 4, 0)), w=np.ones((1, 4, 1)))
        rep = validate_identification(data)
        assert rep.unit_rank[0] == 1
        assert rep.unit_pass[0]

    def test_lagged_outcome_global_pass(self):
        rng = np.random.default_rng(7)
        y = rng.standard_normal((5, 8))
        data = panel_from_arrays(y)  # x = lagged y
        rep = validate_identification(data)
        assert rep.global_pass
        assert rep.ok

    def test_exactly_dw_transitions_fails(self):
        y = np.array([[0.0, 1.0, np.nan, np.nan, np.nan]])
        data = panel_from_arrays(y, x=np.zeros((1, 4, 0)), w=np.ones((1, 4, 1)))
        rep = validate_identification(data)
        assert not rep.unit_pass[0]

    def test_reorder_invariance(self):
        rng = np.random.default_rng(9)
        y = rng.standard_normal((6, 8))
        data = panel_from_arrays(y)
        rep1 = validate_identification(data)
        perm = rng.permutation(6)
        data2 = panel_from_arrays(y[perm])
        rep2 = validate_identification(data2)
        assert rep1.global_rank == rep2.global_rank
        assert rep1.global_pass == rep2.global_pass
        assert sorted(rep1.unit_rank) == sorted(rep2.unit_rank)


class TestWindowMaximality:
    def test_idempotent_and_maximal(self):
        rng = np.random.default_rng(11)
        y = rng.standard_normal((10, 9))
        mask = rng.uniform(size=y.shape) < 0.2
        y[mask] = np.nan
        data = panel_from_arrays(y, x=np.zeros((10, 8, 0)), w=np.ones((10, 8, 1)))
        T = data.T
        for i in range(10):
            t0, t1 = int(data.t0[i]), int(data.t1[i])
            if t1 < t0:
                continue
            run = t1 - t0 + 1
            complete = np.isfinite(y[i, 1 : T + 1])
            # no longer contiguous complete run exists
            best = 0
            cur = 0
            for c in complete:
                cur = cur + 1 if c else 0
                best = max(best, cur)
            assert run == best
