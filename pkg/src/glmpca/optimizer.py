"""Diagonal-approximation Fisher scoring.

One sweep refreshes the predictor statistics before every column update
(the update for a column always sees the effect of the previous one),
walks the updateable U columns in ascending order, then the updateable V
columns in ascending order, and finally re-evaluates the objective.  The
per-column step is

    column += gradient / fisher_information

which ignores mixed second derivatives; that makes each step cheap but
not guaranteed to increase Q, so sweeps that lower Q (or produce
non-finite values) are retried from the sweep's starting point with all
steps halved, up to ``max_halvings`` times.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (ConfigError, DegenerateColumnError, DomainError,
                         FitError, GlmPcaError)
from .model import (INIT_SCALE, ModelState, PredictorStats, fisher_info_u,
                    fisher_info_v, gradient_u, gradient_v, objective,
                    predictor_stats)
from .postprocess import order_dims, orthogonalize, project_out_covariates

ASCENT_SLACK = 1e-12  # accepted drop per sweep: ASCENT_SLACK * (1 + |Q|)


@dataclass(frozen=True)
class FitConfig:
    """Optimization hyperparameters.

    postprocess_every periodically re-projects and re-rotates the latent
    blocks during optimization; it is exposed for experimentation only
    and is not validated beyond a smoke test.
    """

    max_iters: int = 1000
    tol: float = 1e-6
    damping: bool = True
    max_halvings: int = 10
    full_scoring_coef: bool = False
    trace_every: int = 1
    postprocess_every: int | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.trace_every < 1:
            raise ConfigError("trace_every must be at least 1")
        if self.max_halvings < 0:
            raise ConfigError("max_halvings must be nonnegative")


@dataclass
class FitResult:
    """Post-processed fit: orthonormal loadings, norm-ordered factors,
    coefficients, and the (non-decreasing) objective trace."""

    factors: np.ndarray       # N x L
    loadings: np.ndarray      # J x L
    coef_A: np.ndarray        # J x K_o observation-covariate coefficients
    coef_Gamma: np.ndarray    # N x K_f feature-covariate coefficients
    offset: np.ndarray        # length N
    trace: list[tuple[int, float]]
    converged: bool
    iterations_run: int
    final_q: float
    warnings: list[str] = field(default_factory=list)
    postprocessed: bool = True


# ----------------------------------------------------------------------
# column updates


def update_u_column(state: ModelState, k: int, M: np.ndarray, W: np.ndarray,
                    H: np.ndarray, scale: float = 1.0) -> ModelState:
    """One Fisher-scoring step on U[:, k], in place.

    M, W, H must reflect the current state (refresh them between column
    updates).  ``scale`` multiplies the step for damping.
    """
    stats = PredictorStats(None, M, W, H)
    step = gradient_u(state, k, stats) / fisher_info_u(state, k, stats)
    state.U[:, k] += scale * step
    return state


def update_v_column(state: ModelState, k: int, M: np.ndarray, W: np.ndarray,
                    H: np.ndarray, scale: float = 1.0) -> ModelState:
    """One Fisher-scoring step on V[:, k], in place; transpose of
    update_u_column."""
    stats = PredictorStats(None, M, W, H)
    step = gradient_v(state, k, stats) / fisher_info_v(state, k, stats)
    state.V[:, k] += scale * step
    return state


def full_scoring_A(state: ModelState, stats: PredictorStats | None = None,
                   scale: float = 1.0) -> int:
    """Full (non-diagonal) Fisher scoring step for the coefficient block A.

    Each feature row solves its own K_o x K_o weighted least-squares
    system; a singular system falls back to the diagonal update for that
    row.  Returns the number of fallback rows.
    """
    idx = state.index
    if idx.n_obs_cov == 0:
        return 0
    if stats is None:
        stats = predictor_stats(state)
    X = np.array(state.X)
    wh2 = stats.W * stats.H ** 2
    whres = stats.W * stats.H * (state.Y - stats.M)
    fallbacks = 0
    for j in range(state.n_feat):
        gram = X.T @ (wh2[j][:, None] * X)
        rhs = X.T @ whres[j]
        try:
            step = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            step = rhs / np.diag(gram)
            fallbacks += 1
        state.V[j, idx.obs_slice] += scale * step
    return fallbacks


def full_scoring_Gamma(state: ModelState, stats: PredictorStats | None = None,
                       scale: float = 1.0) -> int:
    """Symmetric full-scoring step for Gamma when feature covariates are
    present; returns the number of singular-system fallbacks."""
    idx = state.index
    if idx.n_feat_cov == 0:
        return 0
    if stats is None:
        stats = predictor_stats(state)
    Z = np.array(state.Z)
    wh2 = stats.W * stats.H ** 2
    whres = stats.W * stats.H * (state.Y - stats.M)
    fallbacks = 0
    for i in range(state.n_obs):
        gram = Z.T @ (wh2[:, i][:, None] * Z)
        rhs = Z.T @ whres[:, i]
        try:
            step = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            step = rhs / np.diag(gram)
            fallbacks += 1
        state.U[i, idx.feat_slice] += scale * step
    return fallbacks


# ----------------------------------------------------------------------
# the fit loop


def _reinit_column(state: ModelState, matrix: np.ndarray, k: int) -> None:
    sd = INIT_SCALE / np.sqrt(state.index.n_latent)
    matrix[:, k] = state.rng.normal(0.0, sd, matrix.shape[0])


def _sweep(state: ModelState, cfg: FitConfig, scale: float,
           reinit_done: set, notes: Counter) -> None:
    """One full pass over the updateable columns, steps scaled by
    ``scale``.  Degenerate latent columns get their all-zero partner
    column reinitialized once, then are skipped."""
    idx = state.index
    latent = set(idx.latent_cols)

    def handle_degenerate(k: int, partner: np.ndarray, tag: str) -> None:
        if k in latent and (tag, k) not in reinit_done:
            reinit_done.add((tag, k))
            _reinit_column(state, partner, k)
            notes[f"degenerate column {k}: partner reinitialized"] += 1
        else:
            notes[f"degenerate column {k}: update skipped"] += 1

    if cfg.full_scoring_coef and idx.n_feat_cov:
        fb = full_scoring_Gamma(state, predictor_stats(state), scale)
        if fb:
            notes["full scoring fell back to diagonal for Gamma rows"] += fb
        u_cols = list(idx.latent_cols)
    else:
        u_cols = idx.u_cols
    for k in u_cols:
        stats = predictor_stats(state)
        try:
            update_u_column(state, k, stats.M, stats.W, stats.H, scale)
        except DegenerateColumnError:
            handle_degenerate(k, state.V, "v")

    if cfg.full_scoring_coef and idx.n_obs_cov:
        fb = full_scoring_A(state, predictor_stats(state), scale)
        if fb:
            notes["full scoring fell back to diagonal for A rows"] += fb
        v_cols = list(idx.latent_cols)
    else:
        v_cols = idx.v_cols
    for k in v_cols:
        stats = predictor_stats(state)
        try:
            update_v_column(state, k, stats.M, stats.W, stats.H, scale)
        except DegenerateColumnError:
            handle_degenerate(k, state.U, "u")


def _inline_postprocess(state: ModelState, notes: Counter) -> None:
    # experimental: re-project and re-rotate mid-run, writing the rotated
    # factors back into the latent blocks (means are unchanged)
    try:
        project_out_covariates(state)
        u_hat, v_hat = orthogonalize(state)
        state.U[:, state.index.latent_slice] = u_hat
        state.V[:, state.index.latent_slice] = v_hat
        notes["interleaved postprocessing applied"] += 1
    except GlmPcaError:
        notes["interleaved postprocessing failed; skipped"] += 1


def fit(state: ModelState, config: FitConfig | None = None) -> FitResult:
    """Run Fisher-scoring sweeps to convergence, then post-process.

    ``state`` is modified in place.  Convergence is declared when the
    relative objective change |Q_t - Q_{t-1}| / (|Q_{t-1}| + 1) drops
    below ``config.tol``; hitting ``max_iters`` first yields a result
    with ``converged=False`` (not an error).  With damping enabled the
    recorded trace is non-decreasing.

    Raises FitError when the objective is non-finite even after all
    damping retries (or at the starting point).
    """
    cfg = config or FitConfig()
    if state.rng is None:
        state.rng = np.random.default_rng(0)
    notes: Counter = Counter()
    reinit_done: set = set()
    trace: list[tuple[int, float]] = []

    try:
        q_prev = objective(state)
    except (DomainError, FloatingPointError) as exc:
        raise FitError(f"objective undefined at the starting point: {exc}",
                       trace) from exc
    if not np.isfinite(q_prev):
        raise FitError("objective non-finite at the starting point", trace)

    converged = False
    iterations = 0
    for t in range(1, cfg.max_iters + 1):
        u_snap = state.U.copy()
        v_snap = state.V.copy()
        attempts = cfg.max_halvings + 1 if cfg.damping else 1
        q_new = np.nan
        accepted = False
        for attempt in range(attempts):
            if attempt:
                state.U[...] = u_snap
                state.V[...] = v_snap
            scale = 0.5 ** attempt
            try:
                # overflow here is expected and handled: a non-finite Q
                # triggers a damped retry or a FitError below
                with np.errstate(over="ignore", invalid="ignore",
                                 divide="ignore"):
                    _sweep(state, cfg, scale, reinit_done, notes)
                    q_new = objective(state)
            except (DomainError, FloatingPointError):
                q_new = np.nan
            if not cfg.damping:
                accepted = np.isfinite(q_new)
                break
            if np.isfinite(q_new) and (
                    q_new >= q_prev - ASCENT_SLACK * (1.0 + abs(q_prev))):
                accepted = True
                if attempt:
                    notes["sweep step-halvings applied"] += attempt
                break

        iterations = t
        if not accepted:
            if not np.isfinite(q_new):
                detail = (f"after {cfg.max_halvings} step halvings"
                          if cfg.damping else "with damping off")
                raise FitError(
                    f"objective non-finite at iteration {t} {detail}", trace)
            # finite but still lower after all halvings: keep the current
            # point, which is stationary for this damped scheme
            state.U[...] = u_snap
            state.V[...] = v_snap
            notes["sweep rejected after max halvings; stopped early"] += 1
            trace.append((t, q_prev))
            converged = True
            break

        rel_change = abs(q_new - q_prev) / (abs(q_prev) + 1.0)
        q_prev = q_new
        if t % cfg.trace_every == 0:
            trace.append((t, q_new))
        if rel_change < cfg.tol:
            converged = True
            if t % cfg.trace_every != 0:
                trace.append((t, q_new))
            break
        if cfg.postprocess_every and t % cfg.postprocess_every == 0:
            _inline_postprocess(state, notes)
            # rotation redistributes the penalized norms, so the damping
            # baseline must be re-anchored
            q_prev = objective(state)
    if not converged and trace and trace[-1][0] != iterations:
        trace.append((iterations, q_prev))

    warnings = [f"{msg} (x{n})" if n > 1 else msg
                for msg, n in sorted(notes.items())]
    postprocessed = True
    try:
        project_out_covariates(state)
        u_hat, v_hat = orthogonalize(state)
        u_hat, v_hat = order_dims(u_hat, v_hat)
    except GlmPcaError as exc:
        warnings.append(f"postprocessing skipped: {exc}")
        postprocessed = False
        u_hat = state.U_latent.copy()
        v_hat = state.V_latent.copy()
    zero_dims = int(np.sum(np.linalg.norm(u_hat, axis=0) == 0))
    if postprocessed and zero_dims:
        warnings.append(
            f"{zero_dims} latent dimension(s) have zero norm "
            "(rank-deficient loadings)")

    return FitResult(
        factors=u_hat,
        loadings=v_hat,
        coef_A=np.array(state.A),
        coef_Gamma=np.array(state.Gamma),
        offset=state.delta.copy(),
        trace=trace,
        converged=converged,
        iterations_run=iterations,
        final_q=q_prev,
        warnings=warnings,
        postprocessed=postprocessed,
    )
