"""PID-controlled stochastic gradient descent for tensor wheel factors.

The trainer minimizes the density-oriented squared-residual loss over the
observed entries, with L2 terms on the core and the factor slices each
observation touches.  Instead of feeding the raw residual into the SGD
update, each training entry keeps a PID accumulator: the update is driven
by a weighted mix of the current residual (proportional), the running sum
of that entry's residuals across its visits (integral), and the change
since its previous visit (derivative).  Proportional-only settings
(cp=1, ci=0, cd=0) reduce exactly to plain SGD.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, DivergenceError, ParameterError
from .metrics import evaluate
from .tensor_store import Entry, SparseTensor
from .twd_core import Ranks, TwdFactors, init_factors, reconstruct_entries

DEFAULT_ETA = 0.01
DEFAULT_LAMBDA = 0.01
DEFAULT_PID = (1.0, 0.0, 0.001)


@dataclass(frozen=True)
class HyperParams:
    """Training configuration.

    eta is the SGD learning rate, lam the L2 coefficient, (cp, ci, cd)
    the proportional/integral/derivative gains.  patience counts
    validation epochs without improvement before early stop.
    """

    eta: float = DEFAULT_ETA
    lam: float = DEFAULT_LAMBDA
    cp: float = DEFAULT_PID[0]
    ci: float = DEFAULT_PID[1]
    cd: float = DEFAULT_PID[2]
    max_epochs: int = 1000
    patience: int = 10
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.eta <= 0:
            raise ParameterError(f"eta must be > 0, got {self.eta}")
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if self.max_epochs < 1:
            raise ParameterError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ParameterError(f"patience must be >= 1, got {self.patience}")
        if self.init_scale <= 0:
            raise ParameterError(f"init_scale must be > 0, got {self.init_scale}")
        if self.seed < 0:
            raise ParameterError(f"seed must be >= 0, got {self.seed}")


class PidState:
    """Per-training-entry error history.

    integral[e] is the sum of all residuals observed for entry e so far
    (current visit included), prev_error[e] the residual of its previous
    visit (0 before the first), visit_count[e] the number of visits.
    """

    def __init__(self, n_entries: int):
        self.integral = np.zeros(n_entries)
        self.prev_error = np.zeros(n_entries)
        self.visit_count = np.zeros(n_entries, dtype=np.int64)

    def __len__(self):
        return len(self.integral)


@dataclass
class TrainReport:
    """Per-epoch training trace.

    valid_rmse_history is empty when training ran without a validation
    set; otherwise both histories have length epochs_run.
    """

    loss_history: list[float] = field(default_factory=list)
    valid_rmse_history: list[float] = field(default_factory=list)
    epochs_run: int = 0
    converged_at: int = 0

    def to_dict(self) -> dict:
        return {
            "loss_history": self.loss_history,
            "valid_rmse_history": self.valid_rmse_history,
            "epochs_run": self.epochs_run,
            "converged_at": self.converged_at,
        }


def compute_loss(f: TwdFactors, obs: SparseTensor, lam: float) -> float:
    """Regularized loss over an observation set.

    Sum over observed entries of the squared residual plus lam times the
    squared norms of the core tensor and of the factor slices the entry
    touches (i-slice of a, j-slice of b, k-slice of c).  lam=0 gives the
    pure density-oriented objective.  Empty observation sets cost 0.
    """
    n = len(obs)
    if n == 0:
        return 0.0
    ii, jj, kk = obs.index_arrays
    preds = reconstruct_entries(f, ii, jj, kk)
    residual_sq = float(np.sum((obs.value_array - preds) ** 2))
    if lam == 0.0:
        return residual_sq
    g_norm = float(np.sum(f.g ** 2))
    a_norms = np.sum(f.a ** 2, axis=(0, 2, 3))
    b_norms = np.sum(f.b ** 2, axis=(0, 2, 3))
    c_norms = np.sum(f.c ** 2, axis=(0, 2, 3))
    reg = n * g_norm + float(np.sum(a_norms[ii]) + np.sum(b_norms[jj]) + np.sum(c_norms[kk]))
    return residual_sq + lam * reg


def pid_error(state: PidState, entry_id: int, e_n: float, hp: HyperParams) -> float:
    """Fold the instantaneous residual e_n into the PID state and return
    the composite error cp*e_n + ci*sum_of_visits + cd*(e_n - previous).

    The integral includes e_n itself; on the first visit the previous
    error counts as 0.
    """
    if not 0 <= entry_id < len(state):
        raise BoundsError(f"entry id {entry_id} outside state of size {len(state)}")
    integral = state.integral[entry_id] + e_n
    state.integral[entry_id] = integral
    composite = hp.cp * e_n + hp.ci * integral + hp.cd * (e_n - state.prev_error[entry_id])
    state.prev_error[entry_id] = e_n
    state.visit_count[entry_id] += 1
    return composite


def _partials(f: TwdFactors, i: int, j: int, k: int):
    """Reconstruction at (i, j, k) and its partial derivative w.r.t. each
    touched parameter block, all from the current factor values.

    Returns (x_hat, t_g, t_a, t_b, t_c) where t_g has the core's shape
    and t_a/t_b/t_c the shapes of the i/j/k factor slices.
    """
    g = f.g
    a_i = f.a[:, i]  # (R3, R1, H1)
    b_j = f.b[:, j]  # (R1, R2, H2)
    c_k = f.c[:, k]  # (R2, R3, H3)
    # sum over r1 -> (R3, H1, R2, H2)
    ab = np.tensordot(a_i, b_j, axes=([1], [0]))
    # sum over r3, r2 -> (H1, H2, H3); doubles as the core's partial
    t_g = np.tensordot(ab, c_k, axes=([0, 2], [1, 0]))
    x_hat = float(np.vdot(t_g, g))
    # sum over h1, h2 -> (R3, R2, H3), reorder to c's slice layout (R2, R3, H3)
    t_c = np.tensordot(ab, g, axes=([1, 3], [0, 1])).transpose(1, 0, 2)
    # sum over h2 -> (R1, R2, H1, H3), then r2, h3 -> (R1, H1, R3) -> (R3, R1, H1)
    gb = np.tensordot(b_j, g, axes=([2], [1]))
    t_a = np.tensordot(gb, c_k, axes=([1, 3], [0, 2])).transpose(2, 0, 1)
    # sum over r3 -> (R2, H3, R1, H1), then h1, h3 -> (R2, R1, H2) -> (R1, R2, H2)
    ca = np.tensordot(c_k, a_i, axes=([1], [0]))
    t_b = np.tensordot(ca, g, axes=([3, 1], [0, 2])).transpose(1, 0, 2)
    return x_hat, t_g, t_a, t_b, t_c


def _apply_update(f: TwdFactors, i, j, k, e_t, eta, lam, t_g, t_a, t_b, t_c, entry_id):
    """Apply the four update rules from a pre-step snapshot.

    All partials were evaluated before any write, so the four blocks see
    the same point (Jacobi-style within the step).
    """
    with np.errstate(over="ignore", invalid="ignore"):
        f.g += eta * (e_t * t_g - lam * f.g)
        f.a[:, i] += eta * (e_t * t_a - lam * f.a[:, i])
        f.b[:, j] += eta * (e_t * t_b - lam * f.b[:, j])
        f.c[:, k] += eta * (e_t * t_c - lam * f.c[:, k])
    if not (np.isfinite(e_t)
            and np.all(np.isfinite(f.g))
            and np.all(np.isfinite(f.a[:, i]))
            and np.all(np.isfinite(f.b[:, j]))
            and np.all(np.isfinite(f.c[:, k]))):
        raise DivergenceError(entry_id)


def sgd_step(f: TwdFactors, entry: Entry, entry_id: int, state: PidState,
             hp: HyperParams) -> None:
    """One PID-guided SGD step on a single observation (in place)."""
    x_hat, t_g, t_a, t_b, t_c = _partials(f, entry.i, entry.j, entry.k)
    e = entry.value - x_hat
    e_t = pid_error(state, entry_id, e, hp)
    _apply_update(f, entry.i, entry.j, entry.k, e_t, hp.eta, hp.lam,
                  t_g, t_a, t_b, t_c, entry_id)


def plain_sgd_step(f: TwdFactors, entry: Entry, entry_id: int, hp: HyperParams) -> None:
    """One plain SGD step: the raw residual drives the update directly,
    with no PID bookkeeping.  Reference path for the reduction check."""
    x_hat, t_g, t_a, t_b, t_c = _partials(f, entry.i, entry.j, entry.k)
    e = entry.value - x_hat
    _apply_update(f, entry.i, entry.j, entry.k, e, hp.eta, hp.lam,
                  t_g, t_a, t_b, t_c, entry_id)


def epoch_visit_order(rng: np.random.Generator, n_entries: int) -> np.ndarray:
    """Visit order for one epoch: a fresh permutation from the trainer's
    order generator.  Exposed so tests can replay training runs."""
    return rng.permutation(n_entries)


def train(train_set: SparseTensor, valid_set: SparseTensor, dims, ranks: Ranks,
          hp: HyperParams, pid: bool = True,
          early_stop: bool = True) -> tuple[TwdFactors, TrainReport]:
    """Fit tensor wheel factors to the training set by (PID-)SGD.

    Factors start from ``init_factors(dims, ranks, hp.seed, hp.init_scale)``;
    each epoch visits every training entry once in a seeded shuffled
    order.  After each epoch the regularized training loss is recorded,
    and, when a validation set is given, its RMSE; training stops at
    hp.max_epochs or (with early_stop) once validation RMSE has not
    improved for hp.patience consecutive epochs.  The returned factors
    are the checkpoint from the best-validation epoch.

    Args:
        train_set: observed entries to fit; must be non-empty.
        valid_set: held-out entries for stopping/model selection; may be
            empty, in which case stopping uses max_epochs only and the
            final factors are returned.
        dims: tensor dimensions (I, J, K).
        ranks: ring and core-link ranks.
        hp: hyperparameters.
        pid: when False, run the plain-SGD reference path (no PID state).
        early_stop: when False, always run the full max_epochs.

    Returns:
        (factors, report); report.converged_at is the 0-based epoch index
        of the best validation RMSE (last epoch when no validation set).
    """
    n = len(train_set)
    if n == 0:
        raise ParameterError("training set is empty")
    factors = init_factors(dims, ranks, hp.seed, hp.init_scale)
    state = PidState(n) if pid else None
    order_rng = np.random.default_rng(hp.seed)
    entries = train_set.entries
    use_valid = len(valid_set) > 0

    report = TrainReport()
    best_rmse = np.inf
    best_epoch = 0
    best_factors = None
    bad_epochs = 0

    for epoch in range(hp.max_epochs):
        order = epoch_visit_order(order_rng, n)
        try:
            if pid:
                for entry_id in order:
                    sgd_step(factors, entries[entry_id], int(entry_id), state, hp)
            else:
                for entry_id in order:
                    plain_sgd_step(factors, entries[entry_id], int(entry_id), hp)
        except DivergenceError as err:
            raise err.with_epoch(epoch) from None

        report.loss_history.append(compute_loss(factors, train_set, hp.lam))
        report.epochs_run = epoch + 1

        if use_valid:
            rmse = evaluate(factors, valid_set).rmse
            report.valid_rmse_history.append(rmse)
            if rmse < best_rmse:
                best_rmse = rmse
                best_epoch = epoch
                best_factors = factors.copy()
                bad_epochs = 0
            else:
                bad_epochs += 1
                if early_stop and bad_epochs >= hp.patience:
                    break

    if use_valid:
        report.converged_at = best_epoch
        return best_factors, report
    report.converged_at = report.epochs_run - 1
    return factors, report
