"""Step rules and run loops for the zeroth-order matrix optimizers.

Query-based optimizers (all driven by :func:`run` or stepped directly):

  - ``mezo``: full-space central-difference estimate, one query pair per step.
  - ``zo_sgd``: full-space forward-difference estimate (the generalized
    stepper ``mezo`` is the central single-query instance of).
  - ``subspace_mezo``: lifted subspace estimate, plain descent step.
  - ``lozo``: two-factor low-rank estimate with a lazily resampled left factor.
  - ``zo_muon``: subspace estimate orthogonalized by msign in the projected
    space, lifted back through the projection.

First-order reference steppers (exact gradients, oracle objectives only) are
provided for verification: plain SGD, the basic spectral step, and its
projected low-rank form.

Seeds: a run owns one root seed.  Per-step estimator seeds, projection
resample seeds and factor seeds are derived from (root, tag, step[, block]),
so every trajectory is reproducible and blocks never share a Gaussian stream.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimators, linalg
from .estimators import CENTRAL, FORWARD, EstimatorConfig
from .linalg import NumericalError, Projection
from .params import MATRIX, ParamSpace, partition

MEZO = "mezo"
ZO_SGD = "zo_sgd"
SUBSPACE_MEZO = "subspace_mezo"
LOZO = "lozo"
ZO_MUON = "zo_muon"
OPTIMIZER_KINDS = (MEZO, ZO_SGD, SUBSPACE_MEZO, LOZO, ZO_MUON)

RANDOM = "random"
SKETCHING = "sketching"

# Tags keeping derived Gaussian streams disjoint.
_TAG_ESTIMATE = 1
_TAG_PROJECTION = 2
_TAG_SKETCH = 3
_TAG_LOZO_A = 4
_TAG_LOZO_B = 5


def derive_seed(*parts) -> int:
    """Stable unsigned seed from a tuple of non-negative integers."""
    ss = np.random.SeedSequence(tuple(int(p) for p in parts))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class OptimizerConfig:
    """Scalar hyperparameters shared across the optimizer kinds.

    ``rank`` is clamped per block to min(m, n); ``resample_interval`` is the
    lazy projection refresh period; ``total_steps`` may be zero (a run that
    records nothing and leaves the parameters untouched).
    """

    learning_rate: float
    mu: float = 1e-3
    n_queries: int = 1
    rank: int = 8
    resample_interval: int = 100
    msign_backend: str = "svd"
    ns_iterations: int = 5
    projection_strategy: str = RANDOM
    sketch_momentum_beta: float = 0.9
    total_steps: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.n_queries < 1:
            raise ValueError("n_queries must be positive")
        if self.rank < 1:
            raise ValueError("rank must be positive")
        if self.resample_interval < 1:
            raise ValueError("resample_interval must be positive")
        if self.total_steps < 0:
            raise ValueError("total_steps must be non-negative")
        if self.msign_backend not in ("svd", "ns"):
            raise ValueError(f"msign_backend must be svd or ns, got {self.msign_backend!r}")
        if self.projection_strategy not in (RANDOM, SKETCHING):
            raise ValueError(
                f"projection_strategy must be random or sketching, "
                f"got {self.projection_strategy!r}"
            )
        if not 0.0 <= self.sketch_momentum_beta < 1.0:
            raise ValueError("sketch_momentum_beta must be in [0, 1)")


@dataclass
class OptimizerState:
    """Mutable per-run state: step counter, live projections, sketch momentum."""

    rng_root_seed: int = 0
    step: int = 0
    projections: dict = field(default_factory=dict)
    sketch_momentum: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StepRecord:
    """One trace row: step index, cumulative queries, loss, wall time."""

    step: int
    queries: int
    loss: float
    elapsed_ms: float = 0.0


@dataclass(frozen=True)
class RunResult:
    records: tuple
    final_params: ParamSpace
    queries: int
    eval_queries: int


def _block_rank(cfg, shape) -> int:
    return min(cfg.rank, shape[0], shape[1])


def _msign(gz, cfg, block_name):
    try:
        if cfg.msign_backend == "svd":
            return linalg.msign_svd(gz)
        return linalg.msign_ns(gz, iterations=cfg.ns_iterations)
    except NumericalError as exc:
        raise NumericalError(f"msign failed on block {block_name!r}: {exc}") from exc


def resample_projection(state: OptimizerState, cfg: OptimizerConfig, shapes: dict) -> OptimizerState:
    """Fill in fresh projections for every matrix block.

    Random strategy: an independent column-orthonormal draw per block, seeded
    by (root, step, block index).  Sketching strategy: orthonormalize
    M @ Q where M is the gradient momentum and Q a Gaussian sketch with
    ``rank`` columns; a zero momentum (e.g. at step 0) falls back to the
    random draw so the projection never starts rank-deficient.
    """
    t = state.step
    for idx, (name, shape) in enumerate(shapes.items()):
        r = _block_rank(cfg, shape)
        seed = derive_seed(state.rng_root_seed, _TAG_PROJECTION, t, idx)
        if cfg.projection_strategy == SKETCHING:
            momentum = state.sketch_momentum.get(name)
            if momentum is not None and np.linalg.norm(momentum) > 0.0:
                sketch_rng = np.random.default_rng(
                    np.random.SeedSequence(
                        (state.rng_root_seed, _TAG_SKETCH, t, idx)
                    )
                )
                sketch = sketch_rng.standard_normal((shape[1], r))
                q, rr = np.linalg.qr(momentum @ sketch)
                signs = np.sign(np.diag(rr))
                signs[signs == 0] = 1.0
                state.projections[name] = Projection(q * signs, seed, born_at_step=t)
                continue
        state.projections[name] = linalg.sample_projection(
            shape[0], r, seed, born_at_step=t
        )
    return state


def _ensure_projections(state, cfg, x):
    shapes = {
        name: x[name].shape for name in partition(x).matrix_blocks
    }
    due = state.step == 0 or state.step % cfg.resample_interval == 0
    missing = any(name not in state.projections for name in shapes)
    if due or missing:
        resample_projection(state, cfg, shapes)


def _update_sketch_momentum(state, cfg, lifted):
    if cfg.projection_strategy != SKETCHING:
        return
    beta = cfg.sketch_momentum_beta
    for name, est in lifted.items():
        prev = state.sketch_momentum.get(name)
        if prev is None:
            prev = np.zeros_like(est.grad)
        state.sketch_momentum[name] = beta * prev + (1.0 - beta) * est.grad


def _finish_step(obj, state, new_x):
    state.step += 1
    record = StepRecord(
        step=state.step,
        queries=obj.query_count,
        loss=obj.loss(new_x),
        elapsed_ms=0.0,
    )
    return new_x, record


def step_zo_sgd(obj, x, cfg, state, scheme=FORWARD):
    """Full-space descent step X <- X - eta * g with g from the configured
    difference scheme."""
    est_cfg = EstimatorConfig(mu=cfg.mu, n_queries=cfg.n_queries, scheme=scheme)
    seed = derive_seed(state.rng_root_seed, _TAG_ESTIMATE, state.step)
    grads = estimators.rge_full(obj, x, est_cfg, seed)
    new_x = x.updated(
        {name: x[name] - cfg.learning_rate * est.grad for name, est in grads.items()}
    )
    return _finish_step(obj, state, new_x)


def step_mezo(obj, x, cfg, state):
    """Central-difference single-query full-space step (2 queries)."""
    if cfg.n_queries != 1:
        raise ValueError("mezo uses central differences and requires n_queries=1")
    return step_zo_sgd(obj, x, cfg, state, scheme=CENTRAL)


def step_subspace_mezo(obj, x, cfg, state):
    """Descent along the lifted subspace estimate: X <- X - eta * P g_Z."""
    _ensure_projections(state, cfg, x)
    est_cfg = EstimatorConfig(mu=cfg.mu, n_queries=cfg.n_queries, scheme=FORWARD)
    seed = derive_seed(state.rng_root_seed, _TAG_ESTIMATE, state.step)
    _, lifted = estimators.subspace_rge(obj, x, state.projections, est_cfg, seed)
    _update_sketch_momentum(state, cfg, lifted)
    new_x = x.updated(
        {name: x[name] - cfg.learning_rate * est.grad for name, est in lifted.items()}
    )
    return _finish_step(obj, state, new_x)


def step_lozo(obj, x, cfg, state):
    """Two-factor low-rank step; the left factor is resampled every
    ``resample_interval`` steps, the right factor every step."""
    t = state.step
    epoch = t - t % cfg.resample_interval
    a_factors, b_factors = {}, {}
    for name in partition(x).matrix_blocks:
        idx = x.index(name)
        m, n = x[name].shape
        r = _block_rank(cfg, (m, n))
        a_rng = np.random.default_rng(
            np.random.SeedSequence((state.rng_root_seed, _TAG_LOZO_A, epoch, idx))
        )
        b_rng = np.random.default_rng(
            np.random.SeedSequence((state.rng_root_seed, _TAG_LOZO_B, t, idx))
        )
        a_factors[name] = a_rng.standard_normal((m, r))
        b_factors[name] = b_rng.standard_normal((r, n))
    seed = derive_seed(state.rng_root_seed, _TAG_ESTIMATE, t)
    grads = estimators.lge_lozo(obj, x, a_factors, b_factors, cfg.mu, seed=seed)
    new_x = x.updated(
        {name: x[name] - cfg.learning_rate * est.grad for name, est in grads.items()}
    )
    return _finish_step(obj, state, new_x)


def step_zo_muon(obj, x, cfg, state):
    """Subspace gradient orthogonalization step.

    Per matrix block: estimate g_Z in the projected space, apply msign with
    the configured backend, lift through P and descend; vector blocks take
    the plain full-space estimate from the same shared queries.  A single
    query gives msign a rank-one input whose scale the whitening discards, so
    running with n_queries=1 is allowed but warned about.
    """
    if cfg.n_queries == 1:
        warnings.warn(
            "zo_muon with n_queries=1 reduces to a sign-scaled rank-one step; "
            "multi-query estimates are strongly recommended",
            stacklevel=2,
        )
    _ensure_projections(state, cfg, x)
    est_cfg = EstimatorConfig(mu=cfg.mu, n_queries=cfg.n_queries, scheme=FORWARD)
    seed = derive_seed(state.rng_root_seed, _TAG_ESTIMATE, state.step)
    z_est, lifted = estimators.subspace_rge(obj, x, state.projections, est_cfg, seed)
    _update_sketch_momentum(state, cfg, lifted)
    updates = {}
    for name in x.names:
        if name in state.projections:
            gz = z_est[name].grad
            direction = state.projections[name].matrix @ _msign(gz, cfg, name)
        else:
            direction = lifted[name].grad
        updates[name] = x[name] - cfg.learning_rate * direction
    return _finish_step(obj, state, x.updated(updates))


def step_fo_sgd(grad_oracle, x, learning_rate):
    """Plain first-order descent, used as a reference only."""
    grads = grad_oracle(x)
    return x.updated(
        {name: x[name] - learning_rate * grads[name] for name in x.names}
    )


def step_fo_muon(grad_oracle, x, learning_rate, backend="svd", ns_iterations=5):
    """Basic spectral step X <- X - eta * msign(G) on matrix blocks.

    Vector blocks take the plain gradient step; msign of a vector would
    collapse it to its direction, which is not the reference behaviour.
    """
    grads = grad_oracle(x)
    updates = {}
    for name in x.names:
        g = grads[name]
        if x.kind(name) == MATRIX:
            if backend == "svd":
                g = linalg.msign_svd(g)
            else:
                g = linalg.msign_ns(g, iterations=ns_iterations)
        updates[name] = x[name] - learning_rate * g
    return x.updated(updates)


def step_fo_lowrank_muon(grad_oracle, x, projections, learning_rate):
    """Projected spectral step X <- X - eta * P msign(P^T G)."""
    grads = grad_oracle(x)
    updates = {}
    for name in x.names:
        g = grads[name]
        proj = projections.get(name) if hasattr(projections, "get") else projections
        if proj is not None and x.kind(name) == MATRIX:
            p = proj.matrix if isinstance(proj, Projection) else np.asarray(proj)
            g = p @ linalg.msign_svd(p.T @ g)
        updates[name] = x[name] - learning_rate * g
    return x.updated(updates)


_STEPPERS = {
    MEZO: step_mezo,
    ZO_SGD: step_zo_sgd,
    SUBSPACE_MEZO: step_subspace_mezo,
    LOZO: step_lozo,
    ZO_MUON: step_zo_muon,
}


def queries_per_step(kind: str, cfg: OptimizerConfig) -> int:
    """Gradient-estimation queries one step of ``kind`` consumes."""
    if kind in (MEZO, LOZO):
        return 2
    if kind in (ZO_SGD, SUBSPACE_MEZO, ZO_MUON):
        return cfg.n_queries + 1
    raise ValueError(f"unknown optimizer kind {kind!r}; valid: {', '.join(OPTIMIZER_KINDS)}")


def steps_for_budget(kind: str, cfg: OptimizerConfig, query_budget: int) -> int:
    """Largest step count whose total query cost fits the budget."""
    return max(query_budget, 0) // queries_per_step(kind, cfg)


def run(obj, x0, cfg: OptimizerConfig, optimizer_kind: str, seed: int, eval_every: int = 1) -> RunResult:
    """Execute ``cfg.total_steps`` steps of one optimizer and trace the loss.

    Records (step, cumulative queries, loss at the unperturbed iterate,
    elapsed wall ms) at step 0, every ``eval_every`` steps and at the final
    step.  Trace losses go through the un-counted evaluation channel and are
    reported apart from the gradient-estimation queries.  Deterministic for a
    fixed seed except for the elapsed times.
    """
    if optimizer_kind not in _STEPPERS:
        raise ValueError(
            f"unknown optimizer kind {optimizer_kind!r}; "
            f"valid: {', '.join(OPTIMIZER_KINDS)}"
        )
    if eval_every < 1:
        raise ValueError("eval_every must be positive")
    stepper = _STEPPERS[optimizer_kind]
    state = OptimizerState(rng_root_seed=int(seed))
    x = x0.copy()
    start_queries = obj.query_count
    eval_start = obj.eval_count
    records = []
    t0 = time.perf_counter()
    if cfg.total_steps > 0:
        records.append(
            StepRecord(step=0, queries=0, loss=obj.loss(x), elapsed_ms=0.0)
        )
    for t in range(cfg.total_steps):
        try:
            x, record = stepper(obj, x, cfg, state)
        except Exception as exc:
            # step errors propagate with the trace gathered so far attached
            exc.partial_trace = tuple(records)
            raise
        if (t + 1) % eval_every == 0 or (t + 1) == cfg.total_steps:
            records.append(
                replace(
                    record,
                    queries=obj.query_count - start_queries,
                    elapsed_ms=(time.perf_counter() - t0) * 1e3,
                )
            )
    return RunResult(
        records=tuple(records),
        final_params=x,
        queries=obj.query_count - start_queries,
        eval_queries=obj.eval_count - eval_start,
    )
