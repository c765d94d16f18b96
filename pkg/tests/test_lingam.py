"""Causal discovery: ICA recovery, ordering, effects, bootstrap, discover."""

import json
import warnings

import numpy as np
import pytest

import pumpcausal.rng as rng_mod
from oracles import ols_normal_equations
from pumpcausal.errors import InsufficientGroupError, LingamError
from pumpcausal.grouping import Group, GroupDataset
from pumpcausal.lingam import (
    CausalModel,
    IcaResult,
    LingamConfig,
    bootstrap_cis,
    causal_order,
    discover,
    estimate_effects,
    fast_ica,
    standardize,
    write_adjacency_csv,
    write_effects_csv,
    write_order_json,
)
from pumpcausal.synth import SynthConfig, generate_lingam_scenario, generate_sem_data


def _uniform_sources(rng, n, d):
    # unit-variance uniform sources
    return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(n, d))


def _ica_from_demixing(w):
    w = np.asarray(w, float)
    return IcaResult(mixing=np.linalg.inv(w), demixing=w, n_iter=1, converged=True)


class TestStandardize:
    def test_columns_centered_and_unit_scale(self):
        rng = np.random.default_rng(0)
        x = rng.normal(5.0, 3.0, size=(200, 4))
        std = standardize(x, ["a", "b", "c", "d"])
        assert np.all(np.abs(std.x.mean(axis=0)) < 1e-10)
        assert np.all(np.abs(std.x.std(axis=0) - 1.0) < 1e-10)

    def test_constant_column_dropped_with_warning(self):
        x = np.column_stack([np.ones(50), np.arange(50.0)])
        with pytest.warns(UserWarning, match="constant"):
            std = standardize(x, ["flat", "ramp"])
        assert std.names == ("ramp",)
        assert std.dropped == ("flat",)

    def test_all_constant_errors(self):
        with pytest.raises(LingamError):
            standardize(np.ones((30, 2)), ["a", "b"])


class TestFastIca:
    def test_identity_mixing_recovers_signed_permutation(self):
        rng = rng_mod.stream(0, 900)
        x = _uniform_sources(rng, 5000, 3)
        std = standardize(x, ["a", "b", "c"])
        result = fast_ica(std, LingamConfig(seed=1))
        w_abs = np.abs(result.demixing)
        # each row dominated by a single column, jointly a permutation
        cols = w_abs.argmax(axis=1)
        assert sorted(cols.tolist()) == [0, 1, 2]
        for i, j in enumerate(cols):
            off = np.delete(w_abs[i], j)
            assert np.all(off < 0.1)
            assert w_abs[i, j] > 0.9

    def test_known_mixture_recovered(self):
        rng = rng_mod.stream(0, 901)
        sources = _uniform_sources(rng, 5000, 2)
        mixing = np.array([[1.0, 0.4], [0.3, 1.0]])
        x = sources @ mixing.T
        std = standardize(x, ["x0", "x1"])
        result = fast_ica(std, LingamConfig(seed=2))
        assert result.converged
        # expected mixing in standardized coordinates, unit-variance sources
        expected = (mixing * sources.std(axis=0)[None, :]) / x.std(axis=0)[:, None]
        got = result.mixing
        best = np.inf
        for perm in ([0, 1], [1, 0]):
            for s0 in (1.0, -1.0):
                for s1 in (1.0, -1.0):
                    candidate = got[:, perm] * np.array([s0, s1])[None, :]
                    best = min(best, np.max(np.abs(candidate - expected)))
        assert best < 0.05

    def test_demixing_inverts_mixing(self):
        rng = rng_mod.stream(0, 902)
        x = _uniform_sources(rng, 2000, 4)
        result = fast_ica(standardize(x, list("abcd")), LingamConfig(seed=3))
        identity = result.demixing @ result.mixing
        assert np.max(np.abs(identity - np.eye(4))) < 1e-6

    def test_iteration_cap_flags_nonconvergence(self):
        rng = rng_mod.stream(0, 903)
        x = _uniform_sources(rng, 1000, 3)
        with pytest.warns(UserWarning, match="did not converge"):
            result = fast_ica(standardize(x, list("abc")), LingamConfig(ica_max_iter=2, seed=4))
        assert result.converged is False

    def test_gaussian_data_runs_and_flags(self):
        rng = rng_mod.stream(0, 904)
        x = rng.standard_normal((1500, 3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = fast_ica(standardize(x, list("abc")), LingamConfig(seed=5))
        assert isinstance(result.converged, bool)
        assert np.all(np.isfinite(result.demixing))

    def test_collinear_pair_named(self):
        rng = rng_mod.stream(0, 905)
        base = rng.uniform(-1, 1, 500)
        x = np.column_stack([base, 2.0 * base, rng.uniform(-1, 1, 500)])
        std_x = (x - x.mean(0)) / x.std(0)
        with pytest.raises(LingamError, match="'col0' and 'col1'"):
            fast_ica(std_x)

    def test_too_few_rows(self):
        with pytest.raises(LingamError, match="rows"):
            fast_ica(np.zeros((3, 3)))


class TestCausalOrder:
    def test_identity_demixing_gives_input_order(self):
        assert causal_order(_ica_from_demixing(np.eye(4))) == (0, 1, 2, 3)

    def test_pure_permutation_gives_index_order(self):
        w = np.zeros((3, 3))
        w[0, 2] = 1.0
        w[1, 0] = 1.0
        w[2, 1] = 1.0
        assert causal_order(_ica_from_demixing(w)) == (0, 1, 2)

    def test_sign_flips_do_not_matter(self):
        w = np.diag([-1.0, 1.0, -1.0])
        assert causal_order(_ica_from_demixing(w)) == (0, 1, 2)

    def test_true_demixing_of_chain(self):
        # x0 -> x1 -> x2 with unit noise scales
        b = np.array([[0, 0, 0], [0.8, 0, 0], [0, 0.8, 0]], float)
        w = np.eye(3) - b
        assert causal_order(_ica_from_demixing(w)) == (0, 1, 2)

    def test_chain_recovered_from_data(self):
        hits = 0
        for seed in range(20):
            rng = rng_mod.stream(seed, 906)
            n = 5000
            e = rng.uniform(-1, 1, size=(n, 3))
            x = np.empty_like(e)
            x[:, 0] = e[:, 0]
            x[:, 1] = 0.8 * x[:, 0] + e[:, 1]
            x[:, 2] = 0.8 * x[:, 1] + e[:, 2]
            std = standardize(x, ["x0", "x1", "x2"])
            order = causal_order(fast_ica(std, LingamConfig(seed=seed)))
            hits += order == (0, 1, 2)
        assert hits >= 18


class TestEstimateEffects:
    def test_pairwise_consistency(self):
        rng = rng_mod.stream(0, 907)
        n = 2000
        x0 = rng.uniform(-1, 1, n)
        x1 = 0.8 * x0 + rng.uniform(-1, 1, n)
        x = np.column_stack([x0, x1])
        std = standardize(x, ["x0", "x1"])
        b_std = estimate_effects(std, (0, 1))
        raw = b_std[0, 1] * std.sd[1] / std.sd[0]
        assert raw == pytest.approx(0.8, abs=0.03)

    def test_independent_variables_near_zero(self):
        rng = rng_mod.stream(0, 908)
        x = rng.uniform(-1, 1, size=(5000, 4))
        std = standardize(x, list("abcd"))
        b = estimate_effects(std, (0, 1, 2, 3))
        assert np.max(np.abs(b)) < 0.05

    def test_first_in_order_has_zero_incoming_column(self):
        rng = rng_mod.stream(0, 909)
        x = rng.uniform(-1, 1, size=(500, 3))
        b = estimate_effects(x, (2, 0, 1))
        assert np.all(b[:, 2] == 0.0)

    def test_matches_normal_equations_oracle(self):
        sem = generate_sem_data(5, 3000, seed=5)
        std = standardize(sem.x, [f"v{i}" for i in range(5)])
        order = (0, 1, 2, 3, 4)
        b = estimate_effects(std, order)
        for pos in range(1, 5):
            child = order[pos]
            parents = list(order[:pos])
            oracle = ols_normal_equations(std.x[:, parents], std.x[:, child])
            np.testing.assert_allclose(b[parents, child], oracle, atol=1e-8)

    def test_structural_zeros_exact(self):
        sem = generate_sem_data(6, 4000, seed=7)
        std = standardize(sem.x, [f"v{i}" for i in range(6)])
        order = causal_order(fast_ica(std, LingamConfig(seed=7)))
        b = estimate_effects(std, order)
        position = {v: k for k, v in enumerate(order)}
        for i in range(6):
            for j in range(6):
                if position[i] >= position[j]:
                    assert b[i, j] == 0.0

    def test_rank_deficient_warns(self):
        rng = rng_mod.stream(0, 910)
        col = rng.uniform(-1, 1, 100)
        x = np.column_stack([col, col, rng.uniform(-1, 1, 100)])
        with pytest.warns(UserWarning, match="rank-deficient"):
            estimate_effects(x, (0, 1, 2))

    def test_order_invariant_to_column_scaling(self):
        for seed in range(5):
            sem = generate_sem_data(4, 3000, seed=seed)
            names = [f"v{i}" for i in range(4)]
            base = causal_order(fast_ica(standardize(sem.x, names), LingamConfig(seed=seed)))
            scaled = sem.x.copy()
            scaled[:, 1] *= 2.0  # power of two keeps standardization bit-identical
            scaled[:, 3] *= 0.5
            again = causal_order(fast_ica(standardize(scaled, names), LingamConfig(seed=seed)))
            assert base == again


class TestBootstrap:
    def _pair_data(self, seed, n=2000, effect=0.8):
        rng = rng_mod.stream(seed, 911)
        x0 = rng.uniform(-1, 1, n)
        x1 = effect * x0 + rng.uniform(-1, 1, n)
        return np.column_stack([x0, x1])

    def test_single_resample_degenerate_ci(self):
        x = self._pair_data(0)
        boot = bootstrap_cis(x, n_resamples=1, seed=0)
        np.testing.assert_array_equal(boot.ci_low, boot.ci_high)
        np.testing.assert_array_equal(boot.ci_low_raw, boot.ci_high_raw)

    def test_strong_effect_ci_excludes_zero(self):
        x = self._pair_data(1)
        boot = bootstrap_cis(x, n_resamples=100, seed=1)
        assert boot.ci_low_raw[0, 1] > 0.0

    def test_null_effect_ci_contains_zero(self):
        contains = 0
        for seed in range(10):
            rng = rng_mod.stream(seed, 912)
            x = rng.uniform(-1, 1, size=(1500, 2))
            boot = bootstrap_cis(x, n_resamples=60, seed=seed)
            contains += boot.ci_low_raw[0, 1] <= 0.0 <= boot.ci_high_raw[0, 1]
        assert contains >= 9

    def test_needs_ten_rows(self):
        with pytest.raises(LingamError, match="n >= 10"):
            bootstrap_cis(np.zeros((5, 2)), n_resamples=10)

    def test_parallel_matches_serial(self):
        x = self._pair_data(2, n=600)
        serial = bootstrap_cis(x, n_resamples=40, seed=4, config=LingamConfig(threads=1))
        forked = bootstrap_cis(x, n_resamples=40, seed=4, config=LingamConfig(threads=2))
        np.testing.assert_array_equal(serial.ci_low_raw, forked.ci_low_raw)
        np.testing.assert_array_equal(serial.ci_high_raw, forked.ci_high_raw)
        np.testing.assert_array_equal(serial.sign_stability, forked.sign_stability)


def _group_from_scenario(scenario, group=Group.NEGATIVE):
    return GroupDataset(
        group=group,
        features=scenario.features.values,
        target=scenario.target,
        pump_indices=tuple(range(len(scenario.target))),
        feature_names=scenario.features.feature_names,
    )


class TestDiscover:
    def test_planted_effect_recovered(self):
        scenario = generate_lingam_scenario(
            SynthConfig(seed=5), planted={"std": 1.5}, noise_scale=0.5
        )
        model = discover(_group_from_scenario(scenario), LingamConfig(n_bootstrap=30, seed=5))
        effects = model.effects_to_target(raw=True)
        assert effects["std"] == pytest.approx(1.5, abs=0.2)
        others = [abs(v) for k, v in effects.items() if k != "std"]
        assert max(others) < 0.1

    def test_null_scenario_all_small(self):
        scenario = generate_lingam_scenario(SynthConfig(seed=6), planted={}, noise_scale=1.0)
        model = discover(_group_from_scenario(scenario), LingamConfig(n_bootstrap=20, seed=6))
        assert max(abs(v) for v in model.effects_to_target(raw=True).values()) < 0.05

    def test_single_feature_direction(self):
        hits = 0
        for seed in range(20):
            config = SynthConfig(seed=seed, scenario_features=("std",), scenario_rows=2000)
            scenario = generate_lingam_scenario(config, planted={"std": 1.0}, noise_scale=0.5)
            model = discover(
                _group_from_scenario(scenario), LingamConfig(n_bootstrap=1, seed=seed)
            )
            ordered = [model.variable_names[i] for i in model.causal_order]
            hits += ordered == ["std", "u"]
        assert hits >= 18

    def test_small_group_gated(self):
        scenario = generate_lingam_scenario(SynthConfig(seed=7, scenario_rows=2000))
        group = _group_from_scenario(scenario)
        small = GroupDataset(
            group=group.group,
            features=group.features[:5],
            target=group.target[:5],
            pump_indices=group.pump_indices[:5],
            feature_names=group.feature_names,
        )
        with pytest.raises(InsufficientGroupError):
            discover(small, LingamConfig(n_bootstrap=5))

    def test_constant_feature_dropped(self):
        scenario = generate_lingam_scenario(SynthConfig(seed=8, scenario_rows=500))
        group = _group_from_scenario(scenario)
        doctored = GroupDataset(
            group=group.group,
            features=np.column_stack([group.features, np.ones(group.count)]),
            target=group.target,
            pump_indices=group.pump_indices,
            feature_names=(*group.feature_names, "flatline"),
        )
        with pytest.warns(UserWarning, match="flatline"):
            model = discover(doctored, LingamConfig(n_bootstrap=5, seed=8))
        assert "flatline" in model.dropped_columns
        assert "flatline" not in model.variable_names

    def test_constant_target_errors(self):
        scenario = generate_lingam_scenario(SynthConfig(seed=9, scenario_rows=200))
        group = _group_from_scenario(scenario)
        flat = GroupDataset(
            group=group.group,
            features=group.features,
            target=np.zeros(group.count),
            pump_indices=group.pump_indices,
            feature_names=group.feature_names,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(LingamError, match="target"):
                discover(flat, LingamConfig(n_bootstrap=5))


@pytest.fixture(scope="module")
def model() -> CausalModel:
    scenario = generate_lingam_scenario(
        SynthConfig(seed=10, scenario_rows=800), planted={"std": 1.0}, noise_scale=0.5
    )
    return discover(_group_from_scenario(scenario), LingamConfig(n_bootstrap=10, seed=10))


class TestExports:
    def test_adjacency_rows(self, model, tmp_path):
        path = tmp_path / "adjacency.csv"
        write_adjacency_csv(model, path)
        lines = path.read_text().splitlines()
        d = len(model.variable_names)
        assert len(lines) == 1 + d * d
        assert lines[0] == "from,to,effect,ci_low,ci_high,sign_stability"

    def test_order_json(self, model, tmp_path):
        path = tmp_path / "order.json"
        write_order_json(model, path)
        ordered = json.loads(path.read_text())
        assert sorted(ordered) == sorted(model.variable_names)

    def test_effects_sorted_descending(self, model, tmp_path):
        path = tmp_path / "effects.csv"
        write_effects_csv(model, path)
        rows = path.read_text().splitlines()[1:]
        magnitudes = [abs(float(r.split(",")[1])) for r in rows]
        assert magnitudes == sorted(magnitudes, reverse=True)
        assert len(rows) == len(model.variable_names) - 1
