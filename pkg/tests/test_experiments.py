import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monitored_chain import experiments
from monitored_chain.engine import NumericBreakdown
from monitored_chain.experiments import (
    ConfigError,
    ExperimentConfig,
    ResultTable,
    cell_seed,
    emit_csv,
    fit_scalings,
    read_csv,
    run_preset,
    stopping_time,
    table1_defaults,
    write_outcome,
)


class TestStoppingTime:
    def test_underdamped_two_site(self):
        assert math.isclose(stopping_time(1.0, 2), -math.log(2e-3 * 0.75))

    def test_coherence_at_stopping_time_is_small(self):
        from monitored_chain.twosite import analytical_cn_eta0

        for k in (0.1, 0.5, 1.5):
            t_f = stopping_time(k, 2)
            # the envelope bound puts C_N below 1e-3 from t_f on
            t = np.linspace(t_f, t_f + 20, 200)
            assert np.all(analytical_cn_eta0(k, t) <= 1e-3 + 1e-15)

    @pytest.mark.parametrize("k", [2.0, 3.0, 10.0])
    def test_overdamped_two_site(self, k):
        assert stopping_time(k, 2) == 5 * k

    @pytest.mark.parametrize("k,L,expected", [(2.0, 21, 55.125), (1.0, 11, 11.0), (0.5, 21, 21.0), (1.0, 21, 27.5625)])
    def test_chain(self, k, L, expected):
        assert stopping_time(k, L) == expected

    def test_zero_k_two_site(self):
        with pytest.raises(ValueError):
            stopping_time(0.0, 2)


ks = st.floats(0.01, 10.0)
etas = st.floats(0.0, 1.0)


class TestTable1:
    @given(ks, etas)
    @settings(max_examples=20)
    def test_two_site_scans(self, k, eta):
        for fig in ("fig1", "fig2cd"):
            p = table1_defaults(fig, k, eta)
            assert p.dt == min(1, 1 / k) * 1e-3
            assert p.t_f == stopping_time(k, 2)
            assert p.L == 2 and p.init_site == 1
        assert table1_defaults("fig1", k, eta).n_traj == 10000
        assert table1_defaults("fig2cd", k, eta).n_traj == max(math.ceil(round(1000 * eta, 9)), 100)

    @given(st.floats(1.0, 8.0), etas, st.integers(3, 31))
    @settings(max_examples=20)
    def test_fig4(self, k, eta, L):
        p = table1_defaults("fig4", k, eta, L=L)
        assert p.dt == min(1, 1 / k) * 1e-2
        assert p.t_f == max((L / 4) ** 2 * k, L)
        assert p.init_site == (L + 1) // 2
        expected = 1 if eta == 0 else 200 * max(1, math.ceil(round(10 * eta * k, 9)))
        assert p.n_traj == expected

    @given(st.floats(0.05, 5.0), st.sampled_from([0.0, 0.5, 1.0]))
    @settings(max_examples=20)
    def test_fig2(self, k, eta):
        a = table1_defaults("fig2a", k, eta)
        b = table1_defaults("fig2b", k, eta)
        assert (a.dt, b.dt) == (1e-3, 5e-4)
        assert a.t_f == b.t_f == 10 / k
        assert a.n_traj == {0.0: 1, 0.5: 1800, 1.0: 2200}[eta]
        assert b.n_traj == {0.0: 1, 0.5: 1900, 1.0: 1700}[eta]

    def test_fig3(self):
        p = table1_defaults("fig3", 0.5, 1.0, L=21)
        assert (p.dt, p.t_f, p.n_traj, p.init_site) == (1e-3, 15.0, 100, 11)

    def test_fig2_unlisted_eta(self):
        with pytest.raises(ValueError):
            table1_defaults("fig2a", 0.1, 0.3)

    def test_unknown(self):
        with pytest.raises(ValueError):
            table1_defaults("fig9", 1.0, 0.5)

    def test_sample_stride(self):
        assert table1_defaults("fig3", 0.5, 0.5, L=11).sample_stride == 10
        assert table1_defaults("fig4", 8.0, 0.5, L=11, sample_dt=0.01).sample_stride == 8


class TestConfig:
    def test_grid_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(preset="fig3", k_values=[-1.0])
        with pytest.raises(ConfigError):
            ExperimentConfig(preset="fig3", k_values=[float("inf")])
        with pytest.raises(ConfigError):
            ExperimentConfig(preset="fig3", eta_values=[1.2])
        with pytest.raises(ConfigError):
            ExperimentConfig(preset="fig7")
        with pytest.raises(ConfigError):
            ExperimentConfig(preset="custom", k_values=[1.0], eta_values=[0.5])
        with pytest.raises(ConfigError):
            ExperimentConfig(format_version=99)

    def test_defaults_and_scale(self):
        c = ExperimentConfig(preset="fig4")
        assert c.chain_length == 11 and c.k_values == [1.0, 2.0, 4.0, 8.0]
        assert ExperimentConfig(preset="fig4", paper_scale=True).chain_length == 21
        assert ExperimentConfig(preset="fig2a").chain_length == 2

    def test_desk_cap(self):
        c = ExperimentConfig(preset="fig4")
        assert c.cell_params(8.0, 0.5).n_traj == 200
        assert ExperimentConfig(preset="fig4", paper_scale=True).cell_params(8.0, 0.5).n_traj == 8000

    def test_from_json_with_override(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"preset": "fig3", "seed": 4, "L": 5}))
        c = ExperimentConfig.from_json(path, seed=9)
        assert (c.preset, c.seed, c.L) == ("fig3", 9, 5)

    def test_from_json_unknown_field(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"preset": "fig3", "colour": "red"}))
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(path)

    def test_cell_seed(self):
        assert cell_seed(1, 0.5, 0.1) == cell_seed(1, 0.5, 0.1)
        assert len({cell_seed(1, k, e) for k in (0.5, 1.0) for e in (0.1, 0.2)}) == 4
        assert cell_seed(1, 0.5, 0.1) != cell_seed(2, 0.5, 0.1)


class TestTables:
    def test_empty_is_header_only(self, tmp_path):
        t = ResultTable("x", ["k", "eta", "cn_max"], np.empty((0, 3)))
        emit_csv(t, tmp_path / "x.csv")
        assert (tmp_path / "x.csv").read_text() == "k (J),eta (1),cn_max (1)\n"

    def test_round_trip_bit_exact(self, tmp_path, rng):
        data = np.column_stack([rng.uniform(0, 10, 50), rng.uniform(0, 1, 50), rng.standard_normal(50) * 1e-7])
        emit_csv(ResultTable("x", ["k", "eta", "cn"], data), tmp_path / "x.csv")
        back = read_csv(tmp_path / "x.csv")
        assert back.columns == ["k", "eta", "cn"]
        order = np.lexsort([data[:, 1], data[:, 0]])
        np.testing.assert_array_equal(back.data, data[order])

    def test_sorted_rows(self):
        t = ResultTable("x", ["k", "eta", "t", "cn"], [[2, 0.5, 0, 1], [1, 0.5, 1, 2], [1, 0.5, 0, 3]])
        np.testing.assert_array_equal(t.sorted().column("cn"), [3, 2, 1])

    def test_write_failure_is_oserror(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            emit_csv(ResultTable("x", ["k"], [[1.0]]), blocker / "x.csv")


def small_custom(**kw):
    base = dict(preset="custom", k_values=[1.0, 2.0], eta_values=[0.0, 1.0], dt=1e-3, t_f=0.2,
                n_traj=3, L=3, seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


class TestRunPreset:
    def test_custom_tables(self):
        out = run_preset(small_custom())
        series = out.tables["series"]
        assert series.columns == ["k", "eta", "t", "cn_mean", "cn_sem"]
        assert len(series.data) == 4 * 21
        summary = out.tables["summary"]
        assert len(summary.data) == 4 and np.all(summary.column("n_traj") == 3)
        assert out.failures == []

    def test_byte_identical_reruns(self, tmp_path):
        for name in ("a", "b"):
            write_outcome(run_preset(small_custom(emit_states=True)), tmp_path / name)
        for f in ("custom_series.csv", "custom_summary.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        a = np.load(tmp_path / "a" / "states.npz")
        b = np.load(tmp_path / "b" / "states.npz")
        for key in a.files:
            np.testing.assert_array_equal(a[key], b[key])

    def test_cells_independent_of_grid(self):
        # a cell's numbers do not depend on which other cells are run
        full = run_preset(small_custom()).tables["series"]
        one = run_preset(small_custom(k_values=[2.0], eta_values=[1.0])).tables["series"]
        sel = (full.column("k") == 2.0) & (full.column("eta") == 1.0)
        np.testing.assert_array_equal(full.data[sel], one.data)

    def test_graceful_degradation(self, monkeypatch):
        real = experiments.run_ensemble

        def flaky(params, **kw):
            if params.k == 2.0 and params.eta == 1.0:
                raise NumericBreakdown("boom", step=7, index=1, seed=123)
            return real(params, **kw)

        ref = run_preset(small_custom()).tables["series"]
        monkeypatch.setattr(experiments, "run_ensemble", flaky)
        out = run_preset(small_custom())
        assert len(out.failures) == 1
        f = out.failures[0]
        assert (f["k"], f["eta"], f["seed"], f["step"]) == (2.0, 1.0, 123, 7)
        keep = ~((ref.column("k") == 2.0) & (ref.column("eta") == 1.0))
        np.testing.assert_array_equal(out.tables["series"].data, ref.data[keep])

    def test_fig2cd_small(self):
        c = ExperimentConfig(preset="fig2cd", k_values=[2.0], eta_values=[0.5], n_traj=4)
        t = run_preset(c).tables["stationary"]
        assert t.columns == ["k", "eta", "n_traj", "cn_stationary", "cn_sem"]
        assert t.data.shape == (1, 5) and t.data[0, 2] == 4

    def test_fig1_small(self):
        c = ExperimentConfig(preset="fig1", k_values=[10.0], eta_values=[0.99], n_traj=5)
        out = run_preset(c)
        hist = out.tables["histogram"]
        assert len(hist.data) == 101 * 101
        assert out.tables["summary"].columns == ["k", "eta", "n_traj", "pole_mass", "mean_purity"]

    def test_fig3_small(self):
        c = ExperimentConfig(preset="fig3", eta_values=[0.5], L=5, n_traj=2)
        out = run_preset(c)
        assert set(out.tables) == {"ens_mean_cn", "ens_densities", "ens_bond_cn",
                                   "traj_densities", "traj_bond_cn"}
        dens = out.tables["ens_densities"]
        assert set(dens.column("site")) == {1, 2, 3, 4, 5}

    def test_metadata(self, tmp_path):
        out = run_preset(small_custom())
        paths = write_outcome(out, tmp_path)
        meta = json.loads((tmp_path / "metadata.json").read_text())
        assert meta["master_seed"] == 5 and meta["config"]["preset"] == "custom"
        assert meta["code_version"] and len(meta["cells"]) == 4
        assert not (tmp_path / "states.npz").exists()
        assert len(paths) == 3


class TestFits:
    def table(self, cn):
        k, eta = np.meshgrid([1.0, 2.0, 4.0, 8.0], [0.1, 0.2, 0.3, 0.4, 0.5], indexing="ij")
        return ResultTable("max", ["k", "eta", "cn_max"],
                           np.column_stack([k.ravel(), eta.ravel(), cn(k, eta).ravel()]))

    def test_exact_laws_recovered(self):
        rep = fit_scalings(self.table(lambda k, e: 0.2 * k**-0.7 * np.exp(3.0 * e)))
        assert len(rep.power_law) == 5 and len(rep.exponential) == 4
        for f in rep.power_law:
            assert math.isclose(f.slope, 0.7, rel_tol=1e-10) and f.r2 > 1 - 1e-12 and f.monotone
        for f in rep.exponential:
            assert math.isclose(f.slope, 3.0, rel_tol=1e-10) and f.monotone
        assert rep.notices == []

    def test_ranges_and_notices(self):
        t = self.table(lambda k, e: k**-1.0 * np.exp(e))
        rep = fit_scalings(t, k_min=4.0, eta_max=0.2)
        assert rep.power_law == [] and rep.exponential == []
        assert len(rep.notices) == 9

    def test_nonpositive_excluded(self):
        rep = fit_scalings(self.table(lambda k, e: np.where(k == 8, 0.0, k**-1.0 * np.exp(e))))
        assert any("non-positive" in n for n in rep.notices)
        assert all(f.n == 3 for f in rep.power_law)

    def test_non_monotone_flagged(self):
        rep = fit_scalings(self.table(lambda k, e: (1 + (k == 4)) * k**-1.0 * np.exp(e)))
        assert not any(f.monotone for f in rep.power_law)
        assert json.dumps(rep.as_dict())
