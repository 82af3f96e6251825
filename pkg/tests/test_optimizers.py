import numpy as np
import pytest
from numpy.testing import assert_allclose

from zomat import linalg, objectives, optimizers
from zomat.estimators import FORWARD
from zomat.objectives import Objective
from zomat.optimizers import (
    LOZO,
    MEZO,
    SUBSPACE_MEZO,
    ZO_MUON,
    ZO_SGD,
    OptimizerConfig,
    OptimizerState,
    run,
    steps_for_budget,
)
from zomat.params import ParamSpace


def constant_objective(shape=(6, 5), value=2.5, kinds=None):
    return Objective(
        "constant",
        lambda x: value,
        ParamSpace({"x": np.ones(shape)}, kinds=kinds),
    )


def quad_objective(shape=(8, 6), seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    target = rng.standard_normal(shape)

    def loss_fn(x):
        d = x["x"] - target
        return scale * 0.5 * float(np.vdot(d, d))

    obj = Objective(
        "quad",
        loss_fn,
        ParamSpace({"x": target + rng.standard_normal(shape)}),
        gradient_fn=lambda x: {"x": scale * (x["x"] - target)},
    )
    return obj


def cfg_for(kind, **overrides):
    defaults = dict(learning_rate=1e-2, mu=1e-3, rank=3, resample_interval=100)
    if kind == ZO_MUON:
        defaults["n_queries"] = 4
    defaults.update(overrides)
    return OptimizerConfig(**defaults)


class TestMezo:
    def test_constant_function_leaves_params_unchanged(self):
        obj = constant_objective()
        x = obj.initial_params
        new_x, _ = optimizers.step_mezo(obj, x, cfg_for(MEZO), OptimizerState())
        assert np.array_equal(new_x["x"], x["x"])

    def test_two_queries_per_step(self):
        obj = constant_objective()
        optimizers.step_mezo(obj, obj.initial_params, cfg_for(MEZO), OptimizerState())
        assert obj.query_count == 2

    def test_loss_decreases_for_most_seeds(self):
        # Monte-Carlo over seeds; the central scheme on a quadratic descends
        # whenever the sampled direction is not orthogonal to the gradient
        decreases = 0
        for seed in range(100):
            obj = quad_objective(seed=3)
            x = obj.initial_params
            before = obj.loss(x)
            cfg = cfg_for(MEZO, learning_rate=1e-4)
            new_x, _ = optimizers.step_mezo(obj, x, cfg, OptimizerState(rng_root_seed=seed))
            if obj.loss(new_x) < before:
                decreases += 1
        assert decreases >= 60

    def test_rejects_multi_query(self):
        obj = constant_objective()
        with pytest.raises(ValueError, match="n_queries=1"):
            optimizers.step_mezo(
                obj, obj.initial_params, cfg_for(MEZO, n_queries=2), OptimizerState()
            )


class TestSubspaceMezo:
    def test_constant_function_leaves_params_unchanged(self):
        obj = constant_objective()
        x = obj.initial_params
        new_x, _ = optimizers.step_subspace_mezo(obj, x, cfg_for(SUBSPACE_MEZO), OptimizerState())
        assert np.array_equal(new_x["x"], x["x"])

    def test_update_lies_in_projection_column_space(self):
        obj = quad_objective()
        x = obj.initial_params
        state = OptimizerState(rng_root_seed=1)
        new_x, _ = optimizers.step_subspace_mezo(obj, x, cfg_for(SUBSPACE_MEZO), state)
        p = state.projections["x"].matrix
        delta = new_x["x"] - x["x"]
        assert np.max(np.abs(delta - p @ (p.T @ delta))) <= 1e-10

    def test_two_queries_at_single_query_config(self):
        obj = quad_objective()
        optimizers.step_subspace_mezo(
            obj, obj.initial_params, cfg_for(SUBSPACE_MEZO), OptimizerState()
        )
        assert obj.query_count == 2


class TestLozo:
    def test_constant_function_leaves_params_unchanged(self):
        obj = constant_objective()
        x = obj.initial_params
        new_x, _ = optimizers.step_lozo(obj, x, cfg_for(LOZO), OptimizerState())
        assert np.array_equal(new_x["x"], x["x"])

    def test_update_rank_bounded(self):
        obj = quad_objective(shape=(10, 9))
        x = obj.initial_params
        new_x, _ = optimizers.step_lozo(obj, x, cfg_for(LOZO, rank=3), OptimizerState())
        s = np.linalg.svd(new_x["x"] - x["x"], compute_uv=False)
        assert s[3] / s[0] <= 1e-10

    def test_two_queries_per_step(self):
        obj = quad_objective()
        optimizers.step_lozo(obj, obj.initial_params, cfg_for(LOZO), OptimizerState())
        assert obj.query_count == 2

    def test_left_factor_lazy_right_factor_fresh(self):
        # within one resample epoch all updates share the left factor, so
        # stacked update columns stay within one r-dimensional column space;
        # across the epoch boundary the space changes
        obj = quad_objective(shape=(8, 6), seed=1)
        cfg = cfg_for(LOZO, rank=2, resample_interval=3, learning_rate=1e-3)
        state = OptimizerState(rng_root_seed=5)
        x = obj.initial_params
        deltas = []
        for _ in range(4):
            new_x, _ = optimizers.step_lozo(obj, x, cfg, state)
            deltas.append(new_x["x"] - x["x"])
            x = new_x
        in_epoch = np.hstack(deltas[:3])
        s = np.linalg.svd(in_epoch, compute_uv=False)
        assert s[2] / s[0] <= 1e-10  # same A for steps 0, 1, 2
        crossing = np.hstack(deltas[2:])
        s = np.linalg.svd(crossing, compute_uv=False)
        assert s[2] / s[0] > 1e-6  # step 3 resampled A


class TestZoMuon:
    def test_constant_function_leaves_params_unchanged(self):
        obj = constant_objective()
        x = obj.initial_params
        new_x, _ = optimizers.step_zo_muon(obj, x, cfg_for(ZO_MUON), OptimizerState())
        assert np.array_equal(new_x["x"], x["x"])

    def test_update_in_column_space_with_unit_singular_values(self):
        obj = quad_objective(shape=(12, 10))
        x = obj.initial_params
        state = OptimizerState(rng_root_seed=2)
        cfg = cfg_for(ZO_MUON, rank=4)
        new_x, _ = optimizers.step_zo_muon(obj, x, cfg, state)
        delta = new_x["x"] - x["x"]
        p = state.projections["x"].matrix
        assert np.max(np.abs(delta - p @ (p.T @ delta))) <= 1e-10
        s = np.linalg.svd(delta / cfg.learning_rate, compute_uv=False)
        nonzero = s[s > 1e-10]
        assert np.max(np.abs(nonzero - 1.0)) <= 1e-8

    def test_queries_per_step_is_nq_plus_one(self):
        obj = quad_objective()
        optimizers.step_zo_muon(
            obj, obj.initial_params, cfg_for(ZO_MUON, n_queries=4), OptimizerState()
        )
        assert obj.query_count == 5

    def test_update_norm_is_lr_times_sqrt_rank(self):
        obj = quad_objective(shape=(12, 10))
        x = obj.initial_params
        cfg = cfg_for(ZO_MUON, rank=4)
        new_x, _ = optimizers.step_zo_muon(obj, x, cfg, OptimizerState(rng_root_seed=3))
        norm = np.linalg.norm(new_x["x"] - x["x"])
        expected = cfg.learning_rate * np.sqrt(4)
        assert abs(norm - expected) <= 1e-8 * expected

    def test_direction_invariant_to_objective_scaling(self):
        # msign discards scale, so c * f and f give the same step
        cfg = cfg_for(ZO_MUON, rank=4)
        results = []
        for scale in (1.0, 1000.0):
            obj = quad_objective(shape=(9, 7), seed=4, scale=scale)
            x = obj.initial_params
            new_x, _ = optimizers.step_zo_muon(obj, x, cfg, OptimizerState(rng_root_seed=6))
            results.append(new_x["x"] - x["x"])
        assert np.max(np.abs(results[0] - results[1])) <= 1e-8

    def test_single_query_warns_and_is_scale_free(self):
        # at one query the direction is sign(coef) * P msign(Psi): the
        # magnitude of the finite difference cannot matter
        cfg = cfg_for(ZO_MUON, n_queries=1, rank=3)
        deltas = []
        for scale in (1.0, 50.0):
            obj = quad_objective(shape=(8, 6), seed=5, scale=scale)
            x = obj.initial_params
            with pytest.warns(UserWarning, match="n_queries=1"):
                new_x, _ = optimizers.step_zo_muon(
                    obj, x, cfg, OptimizerState(rng_root_seed=7)
                )
            deltas.append(new_x["x"] - x["x"])
        assert np.max(np.abs(deltas[0] - deltas[1])) <= 1e-8

    def test_vector_only_space_matches_forward_full_space_stepper(self):
        # with no matrix blocks the spectral machinery is inert and the
        # trajectory must coincide bit-for-bit with plain forward descent
        def build():
            rng = np.random.default_rng(8)
            c = rng.standard_normal((1, 7))
            return Objective(
                "vec",
                lambda x: float(np.vdot(c, x["b"]) ** 2),
                ParamSpace({"b": np.ones((1, 7))}, kinds={"b": "vector"}),
            )

        cfg = cfg_for(ZO_MUON, n_queries=2, learning_rate=1e-3)
        obj_a, obj_b = build(), build()
        xa, xb = obj_a.initial_params, obj_b.initial_params
        state_a = OptimizerState(rng_root_seed=9)
        state_b = OptimizerState(rng_root_seed=9)
        for _ in range(5):
            xa, _ = optimizers.step_zo_muon(obj_a, xa, cfg, state_a)
            xb, _ = optimizers.step_zo_sgd(obj_b, xb, cfg, state_b, scheme=FORWARD)
            assert np.array_equal(xa["b"], xb["b"])
        assert obj_a.query_count == obj_b.query_count


class TestResampling:
    @pytest.mark.parametrize("interval", [1, 3, 100])
    def test_schedule_matches_interval(self, interval):
        obj = quad_objective(shape=(6, 5))
        cfg = cfg_for(ZO_MUON, rank=2, resample_interval=interval, learning_rate=1e-4)
        state = OptimizerState(rng_root_seed=11)
        x = obj.initial_params
        total = min(2 * interval + 2, 12) if interval > 3 else 2 * interval + 2
        snapshots = []
        for _ in range(total):
            snapshots.append(None)
            optimizers._ensure_projections(state, cfg, x)
            snapshots[-1] = state.projections["x"].matrix.copy()
            x, _ = optimizers.step_zo_muon(obj, x, cfg, state)
        for t in range(1, len(snapshots)):
            same = np.array_equal(snapshots[t], snapshots[t - 1])
            if t % interval == 0:
                assert not same, f"expected resample at step {t}"
            else:
                assert same, f"unexpected resample at step {t}"

    def test_hundred_step_window(self):
        obj = quad_objective(shape=(5, 4))
        cfg = cfg_for(ZO_MUON, rank=2, resample_interval=100, learning_rate=1e-5)
        state = OptimizerState(rng_root_seed=12)
        x = obj.initial_params
        seen = []
        for _ in range(101):
            x, _ = optimizers.step_zo_muon(obj, x, cfg, state)
            seen.append(state.projections["x"].matrix.copy())
        for t in range(99):
            assert np.array_equal(seen[t], seen[t + 1])
        assert not np.array_equal(seen[99], seen[100])

    def test_resample_deterministic(self):
        cfg = cfg_for(ZO_MUON, rank=3)
        shapes = {"x": (8, 6)}
        a = optimizers.resample_projection(
            OptimizerState(rng_root_seed=3, step=7), cfg, shapes
        )
        b = optimizers.resample_projection(
            OptimizerState(rng_root_seed=3, step=7), cfg, shapes
        )
        assert np.array_equal(a.projections["x"].matrix, b.projections["x"].matrix)

    def test_rank_clamped_to_block_dims(self):
        cfg = cfg_for(ZO_MUON, rank=50)
        state = optimizers.resample_projection(
            OptimizerState(rng_root_seed=0), cfg, {"x": (8, 6)}
        )
        assert state.projections["x"].matrix.shape == (8, 6)

    def test_sketching_zero_momentum_falls_back_to_random(self):
        cfg_sketch = cfg_for(ZO_MUON, projection_strategy="sketching")
        cfg_random = cfg_for(ZO_MUON)
        a = optimizers.resample_projection(OptimizerState(rng_root_seed=4), cfg_sketch, {"x": (8, 6)})
        b = optimizers.resample_projection(OptimizerState(rng_root_seed=4), cfg_random, {"x": (8, 6)})
        assert np.array_equal(a.projections["x"].matrix, b.projections["x"].matrix)

    def test_sketching_uses_momentum_after_steps(self):
        obj = quad_objective(shape=(8, 6))
        cfg = cfg_for(
            ZO_MUON, rank=2, projection_strategy="sketching", resample_interval=2
        )
        state = OptimizerState(rng_root_seed=13)
        x = obj.initial_params
        for _ in range(2):
            x, _ = optimizers.step_zo_muon(obj, x, cfg, state)
        assert np.linalg.norm(state.sketch_momentum["x"]) > 0
        before = state.projections["x"].matrix.copy()
        x, _ = optimizers.step_zo_muon(obj, x, cfg, state)  # step 2 resamples
        after = state.projections["x"].matrix
        assert not np.array_equal(before, after)
        gram = after.T @ after
        assert np.max(np.abs(gram - np.eye(2))) <= 1e-10
        # fallback-to-random would give a different matrix than the sketch
        random_state = optimizers.resample_projection(
            OptimizerState(rng_root_seed=13, step=2), cfg_for(ZO_MUON, rank=2), {"x": (8, 6)}
        )
        assert not np.array_equal(after, random_state.projections["x"].matrix)


class TestFirstOrderReferences:
    def test_basic_spectral_step_on_identity_gradient(self):
        x = ParamSpace({"x": np.zeros((3, 3))})
        new_x = optimizers.step_fo_muon(lambda _: {"x": np.eye(3)}, x, 0.1)
        assert_allclose(new_x["x"], -0.1 * np.eye(3), atol=1e-12)

    def test_diagonal_gradient_equalized(self):
        x = ParamSpace({"x": np.zeros((2, 2))})
        new_x = optimizers.step_fo_muon(lambda _: {"x": np.diag([3.0, 0.5])}, x, 0.1)
        assert_allclose(new_x["x"], -0.1 * np.eye(2), atol=1e-12)

    def test_rank_deficient_gradient_confines_step(self):
        rng = np.random.default_rng(14)
        g = np.outer(rng.standard_normal(6), rng.standard_normal(5))
        x = ParamSpace({"x": np.zeros((6, 5))})
        new_x = optimizers.step_fo_muon(lambda _: {"x": g}, x, 1.0)
        delta = new_x["x"]
        residual = (np.eye(6) - g @ np.linalg.pinv(g)) @ delta
        assert np.max(np.abs(residual)) <= 1e-10

    def test_lowrank_with_svd_projection_matches_full(self):
        rng = np.random.default_rng(15)
        g = rng.standard_normal((8, 3)) @ rng.standard_normal((3, 6))
        u, _, _ = np.linalg.svd(g, full_matrices=False)
        x = ParamSpace({"x": np.zeros((8, 6))})
        full = optimizers.step_fo_muon(lambda _: {"x": g}, x, 0.5)
        low = optimizers.step_fo_lowrank_muon(
            lambda _: {"x": g}, x, {"x": u[:, :3]}, 0.5
        )
        assert np.max(np.abs(full["x"] - low["x"])) <= 1e-8

    def test_orthogonal_projection_gives_zero_step(self):
        rng = np.random.default_rng(16)
        g = np.zeros((6, 4))
        g[:3] = rng.standard_normal((3, 4))
        p = np.zeros((6, 2))
        p[3:5] = np.eye(2)  # col(P) orthogonal to col(G)
        x = ParamSpace({"x": np.ones((6, 4))})
        new_x = optimizers.step_fo_lowrank_muon(lambda _: {"x": g}, x, {"x": p}, 0.5)
        assert np.array_equal(new_x["x"], x["x"])

    def test_random_projection_step_in_column_space(self):
        rng = np.random.default_rng(17)
        g = rng.standard_normal((8, 5))
        p = linalg.sample_projection(8, 3, seed=1).matrix
        x = ParamSpace({"x": np.zeros((8, 5))})
        new_x = optimizers.step_fo_lowrank_muon(lambda _: {"x": g}, x, {"x": p}, 1.0)
        delta = new_x["x"]
        assert np.max(np.abs(delta - p @ (p.T @ delta))) <= 1e-10

    def test_plain_sgd(self):
        x = ParamSpace({"x": np.zeros((2, 2))})
        new_x = optimizers.step_fo_sgd(lambda _: {"x": np.ones((2, 2))}, x, 0.25)
        assert_allclose(new_x["x"], -0.25 * np.ones((2, 2)), atol=1e-15)


class TestRun:
    def test_zero_steps_is_empty_trace(self):
        obj = quad_objective()
        x0 = obj.initial_params
        result = run(obj, x0, cfg_for(MEZO, total_steps=0), MEZO, seed=0)
        assert result.records == ()
        assert result.final_params.allclose(x0)
        assert result.queries == 0

    def test_same_seed_identical_losses(self):
        losses = []
        for _ in range(2):
            obj = quad_objective(seed=6)
            result = run(obj, obj.initial_params, cfg_for(MEZO, total_steps=20), MEZO, seed=3)
            losses.append([rec.loss for rec in result.records])
        assert losses[0] == losses[1]

    def test_mezo_total_queries(self):
        obj = quad_objective()
        result = run(obj, obj.initial_params, cfg_for(MEZO, total_steps=25), MEZO, seed=0)
        assert result.queries == 50
        assert result.records[-1].queries == 50

    def test_records_strictly_increasing(self):
        obj = quad_objective()
        cfg = cfg_for(ZO_MUON, total_steps=13, n_queries=2)
        result = run(obj, obj.initial_params, cfg, ZO_MUON, seed=1, eval_every=4)
        steps = [rec.step for rec in result.records]
        queries = [rec.queries for rec in result.records]
        assert steps == [0, 4, 8, 12, 13]
        assert queries == sorted(set(queries))

    def test_initial_record_present(self):
        obj = quad_objective()
        result = run(obj, obj.initial_params, cfg_for(MEZO, total_steps=2), MEZO, seed=0)
        assert result.records[0].step == 0
        assert result.records[0].queries == 0

    def test_unknown_kind_lists_valid(self):
        obj = quad_objective()
        with pytest.raises(ValueError, match="mezo.*zo_muon"):
            run(obj, obj.initial_params, cfg_for(MEZO, total_steps=1), "adam", seed=0)

    def test_eval_queries_reported_separately(self):
        obj = quad_objective()
        result = run(obj, obj.initial_params, cfg_for(MEZO, total_steps=10), MEZO, seed=0)
        assert result.queries == 20
        assert result.eval_queries >= 10  # per-step trace losses do not count

    def test_failed_step_carries_partial_trace(self):
        calls = {"n": 0}

        def flaky(x):
            calls["n"] += 1
            return float("inf") if calls["n"] > 6 else 1.0

        obj = Objective("flaky", flaky, ParamSpace({"x": np.zeros((2, 2))}))
        from zomat.objectives import EvaluationError

        with pytest.raises(EvaluationError) as excinfo:
            run(obj, obj.initial_params, cfg_for(MEZO, total_steps=10), MEZO, seed=0)
        trace = excinfo.value.partial_trace
        assert trace[0].step == 0  # initial record plus the completed steps
        assert trace[-1].step >= 1


class TestBudgeting:
    def test_steps_for_budget(self):
        assert steps_for_budget(MEZO, cfg_for(MEZO), 100) == 50
        assert steps_for_budget(ZO_MUON, cfg_for(ZO_MUON, n_queries=4), 20_000) == 4000
        assert steps_for_budget(SUBSPACE_MEZO, cfg_for(SUBSPACE_MEZO), 7) == 3
        assert steps_for_budget(LOZO, cfg_for(LOZO), 5) == 2

    @pytest.mark.parametrize(
        "kind,n_queries,budget", [(MEZO, 1, 101), (ZO_MUON, 4, 20_000), (ZO_MUON, 3, 17)]
    )
    def test_budget_fairness_bounds(self, kind, n_queries, budget):
        cfg = cfg_for(kind, n_queries=n_queries)
        cost = optimizers.queries_per_step(kind, cfg)
        steps = steps_for_budget(kind, cfg, budget)
        total = steps * cost
        assert total <= budget
        assert total >= budget - (cost - 1)


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(learning_rate=0.0),
            dict(learning_rate=1e-2, mu=0.0),
            dict(learning_rate=1e-2, n_queries=0),
            dict(learning_rate=1e-2, rank=0),
            dict(learning_rate=1e-2, resample_interval=0),
            dict(learning_rate=1e-2, total_steps=-1),
            dict(learning_rate=1e-2, msign_backend="qr"),
            dict(learning_rate=1e-2, projection_strategy="pca"),
            dict(learning_rate=1e-2, sketch_momentum_beta=1.0),
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            OptimizerConfig(**kwargs)

    def test_ns_backend_runs(self):
        obj = quad_objective(shape=(10, 8))
        cfg = cfg_for(ZO_MUON, msign_backend="ns", rank=3)
        new_x, record = optimizers.step_zo_muon(
            obj, obj.initial_params, cfg, OptimizerState(rng_root_seed=20)
        )
        assert np.all(np.isfinite(new_x["x"]))
        assert record.step == 1
