"""Damped Gauss-Newton over stacked pose/code/affine variables.

The solver is deliberately dense: a window of a handful of keyframes
with small codes stays around a thousand unknowns, where one Cholesky
factorization is microseconds and sparsity bookkeeping would dominate
the code. Variables live on their natural manifolds; steps are applied
by the problem object (poses by left-multiplicative retraction, codes
and affine parameters additively).

A problem object provides:
    layout                 VariableLayout of the free variables
    values()               dict var_id -> current value
    evaluate(want_jac)     list of BoundBlock at the current state
    priors()               iterable of LinearPrior
    code_prior_weight      weight of the 1/2*w*|c|^2 pull toward the
                           zero code (the decoder's single-view guess)
    apply_step(delta)      retract the state by a layout-ordered vector
    snapshot()/restore(s)  cheap state save for rejected steps
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DivergenceDetected,
    IndefiniteSystem,
    SingularBlock,
    UnknownVariable,
)
from .geometry import Se3Pose, se3_local_coords, se3_retract

KIND_SIZES = {"pose": 6, "affine": 2}
LAMBDA_MAX = 1e12


@dataclass(frozen=True)
class LayoutEntry:
    var_id: object
    kind: str  # pose | code | affine
    size: int
    offset: int


class VariableLayout:
    """Ordered, contiguous packing of named variables into one vector."""

    def __init__(self):
        self.entries = []
        self._by_id = {}
        self.dim = 0

    def add(self, var_id, kind, size=None):
        if var_id in self._by_id:
            raise ValueError("duplicate variable %r" % (var_id,))
        if kind == "code":
            if not size or size <= 0:
                raise ValueError("code variables need a positive size")
        elif kind in KIND_SIZES:
            size = KIND_SIZES[kind]
        else:
            raise ValueError("unknown variable kind %r" % kind)
        e = LayoutEntry(var_id, kind, int(size), self.dim)
        self.entries.append(e)
        self._by_id[var_id] = e
        self.dim += e.size
        return self

    def entry(self, var_id) -> LayoutEntry:
        try:
            return self._by_id[var_id]
        except KeyError:
            raise UnknownVariable("variable %r not in layout" % (var_id,)) from None

    def slice_of(self, var_id):
        e = self.entry(var_id)
        return slice(e.offset, e.offset + e.size)

    def __contains__(self, var_id):
        return var_id in self._by_id

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


@dataclass
class BoundBlock:
    """A ResidualBlock tied to the variables its Jacobian columns belong
    to. A binding of None means that variable is held fixed (gauge) and
    its columns are dropped. `scale` multiplies the weights (pyramid
    level weighting)."""

    block: object
    pose_A: object = None
    pose_B: object = None
    code_A: object = None
    code_B: object = None
    affine: object = None
    scale: float = 1.0

    def bindings(self):
        for slot, jac_attr in (
            ("pose_A", "J_pose_A"),
            ("pose_B", "J_pose_B"),
            ("code_A", "J_code_A"),
            ("code_B", "J_code_B"),
            ("affine", "J_affine"),
        ):
            var_id = getattr(self, slot)
            if var_id is None:
                continue
            jac = getattr(self.block, jac_attr)
            if jac is not None:
                yield var_id, jac


@dataclass
class NormalEquations:
    H: np.ndarray
    g: np.ndarray
    cost: float  # 1/2 * sum w r^2 including prior and code-prior terms


@dataclass
class LinearPrior:
    """Quadratic information on a subset of variables around stored
    linearization points: cost(x) = g'd + 1/2 d'Hd, d = x (-) x_lin."""

    entries: list  # (var_id, kind, size) in packing order
    H: np.ndarray
    g: np.ndarray
    lin_points: dict

    def __post_init__(self):
        dim = sum(s for _, _, s in self.entries)
        if self.H.shape != (dim, dim) or self.g.shape != (dim,):
            raise ValueError("prior dimensions inconsistent with entries")
        if not np.allclose(self.H, self.H.T, atol=1e-9):
            raise ValueError("prior information matrix must be symmetric")
        w = np.linalg.eigvalsh(self.H)
        if w.size and w[0] < -1e-9 * max(1.0, w[-1]):
            raise ValueError("prior information matrix must be PSD")

    def local_diff(self, values):
        """Stacked manifold difference of current values from the
        linearization points, in packing order."""
        parts = []
        for var_id, kind, size in self.entries:
            x = values[var_id]
            x0 = self.lin_points[var_id]
            if kind == "pose":
                parts.append(se3_local_coords(x, x0))
            else:
                parts.append(np.asarray(x, dtype=np.float64) - x0)
        return np.concatenate(parts) if parts else np.zeros(0)


def _accumulate(blocks, layout, priors, code_prior_weight, values, want_system):
    dim = layout.dim
    H = np.zeros((dim, dim)) if want_system else None
    g = np.zeros(dim) if want_system else None
    cost = 0.0

    for bb in blocks:
        blk = bb.block
        w = blk.weights * bb.scale
        r = blk.residuals
        cost += 0.5 * float((w * r * r).sum())
        if not want_system:
            continue
        bound = [(layout.slice_of(v), jac) for v, jac in bb.bindings()]
        wr = w * r
        for i, (sl_i, J_i) in enumerate(bound):
            Jw = J_i * w[:, None]
            g[sl_i] += J_i.T @ wr
            for sl_j, J_j in bound[i:]:
                Hij = Jw.T @ J_j
                H[sl_i, sl_j] += Hij
                if sl_i != sl_j:
                    H[sl_j, sl_i] += Hij.T

    if code_prior_weight > 0.0:
        for e in layout:
            if e.kind != "code":
                continue
            c = np.asarray(values[e.var_id], dtype=np.float64)
            cost += 0.5 * code_prior_weight * float(c @ c)
            if want_system:
                sl = layout.slice_of(e.var_id)
                H[sl, sl] += code_prior_weight * np.eye(e.size)
                g[sl] += code_prior_weight * c

    for prior in priors:
        d = prior.local_diff(values)
        cost += float(prior.g @ d) + 0.5 * float(d @ prior.H @ d)
        if not want_system:
            continue
        slices = [layout.slice_of(var_id) for var_id, _, _ in prior.entries]
        offs = np.cumsum([0] + [s for _, _, s in prior.entries])
        g_eff = prior.g + prior.H @ d
        for i, sl_i in enumerate(slices):
            g[sl_i] += g_eff[offs[i] : offs[i + 1]]
            for j, sl_j in enumerate(slices):
                H[sl_i, sl_j] += prior.H[offs[i] : offs[i + 1], offs[j] : offs[j + 1]]

    if want_system:
        H = 0.5 * (H + H.T)
        return NormalEquations(H=H, g=g, cost=cost)
    return cost


def assemble(blocks, layout, priors=(), code_prior_weight=0.0, values=None):
    """Normal equations H = sum J'WJ (+priors), g = sum J'Wr (+priors)."""
    return _accumulate(blocks, layout, priors, code_prior_weight, values or {}, True)


def total_cost(blocks, layout, priors=(), code_prior_weight=0.0, values=None):
    return _accumulate(blocks, layout, priors, code_prior_weight, values or {}, False)


def solve_step(ne: NormalEquations, lam):
    """Solve (H + lam*diag(H)) delta = -g by dense Cholesky."""
    if lam < 0:
        raise ValueError("damping must be nonnegative")
    A = ne.H + lam * np.diag(np.diag(ne.H))
    try:
        f = cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise IndefiniteSystem(str(exc)) from exc
    return -cho_solve(f, ne.g)


@dataclass
class SolverOptions:
    max_iters: int = 50
    lambda_init: float = 1e-4
    lambda_up: float = 10.0
    lambda_down: float = 0.5
    cost_tol: float = 1e-6  # relative decrease below this stops
    step_tol: float = 1e-8


@dataclass
class OptimizationReport:
    iterations: int
    accepted: int
    rejected: int
    cost_trace: list  # accepted costs, initial first, strictly decreasing
    final_lambda: float
    termination: str  # converged_cost | converged_step | max_iters | stalled

    @property
    def final_cost(self):
        return self.cost_trace[-1]

    def to_json(self):
        return json.dumps(
            {
                "iterations": self.iterations,
                "accepted": self.accepted,
                "rejected": self.rejected,
                "cost_trace": [float(c) for c in self.cost_trace],
                "final_lambda": self.final_lambda,
                "termination": self.termination,
            }
        )


def optimize(problem, opts: SolverOptions = SolverOptions()) -> OptimizationReport:
    """Levenberg-style loop: accept a step only if the cost decreases,
    otherwise raise the damping and retry from the same state."""
    lam = opts.lambda_init
    values = problem.values()
    priors = list(problem.priors())
    cpw = problem.code_prior_weight
    blocks = problem.evaluate(want_jacobians=True)
    ne = assemble(blocks, problem.layout, priors, cpw, values)
    cost = ne.cost
    if not np.isfinite(cost):
        raise DivergenceDetected("initial cost is not finite")

    trace = [cost]
    accepted = rejected = 0
    termination = "max_iters"
    it = 0
    while it < opts.max_iters:
        it += 1
        try:
            delta = solve_step(ne, lam)
        except IndefiniteSystem:
            lam *= opts.lambda_up
            rejected += 1
            if lam > LAMBDA_MAX:
                termination = "stalled"
                break
            continue
        if np.linalg.norm(delta) < opts.step_tol:
            termination = "converged_step"
            break

        snap = problem.snapshot()
        problem.apply_step(delta)
        values = problem.values()
        # evaluate jacobians at the candidate up front: accepted steps reuse
        # them for the next normal equations instead of evaluating twice
        blocks = problem.evaluate(want_jacobians=True)
        new_cost = total_cost(blocks, problem.layout, priors, cpw, values)
        if not np.isfinite(new_cost):
            problem.restore(snap)
            raise DivergenceDetected("candidate cost is not finite")

        if new_cost < cost:
            accepted += 1
            lam = max(lam * opts.lambda_down, 1e-12)
            rel = (cost - new_cost) / max(cost, 1e-300)
            cost = new_cost
            trace.append(cost)
            if rel < opts.cost_tol:
                termination = "converged_cost"
                break
            ne = assemble(blocks, problem.layout, priors, cpw, values)
        else:
            problem.restore(snap)
            values = problem.values()
            rejected += 1
            lam *= opts.lambda_up
            if lam > LAMBDA_MAX:
                termination = "stalled"
                break

    return OptimizationReport(
        iterations=it,
        accepted=accepted,
        rejected=rejected,
        cost_trace=trace,
        final_lambda=lam,
        termination=termination,
    )


def retract_values(layout, values, delta):
    """New value dict with each variable moved by its slice of delta."""
    out = dict(values)
    for e in layout:
        d = delta[e.offset : e.offset + e.size]
        if e.kind == "pose":
            out[e.var_id] = se3_retract(values[e.var_id], d)
        else:
            out[e.var_id] = np.asarray(values[e.var_id], dtype=np.float64) + d
    return out


def marginalize(ne: NormalEquations, layout, drop_vars, values) -> LinearPrior:
    """Schur complement of the dropped block: the prior kept variables
    inherit from everything the dropped ones ever observed.

    H_prior = H_kk - H_kd (H_dd + eps I)^-1 H_dk, likewise for g; the
    current values of the kept variables become linearization points.
    """
    drop = set(drop_vars)
    for v in drop:
        layout.entry(v)
    keep_entries = [e for e in layout if e.var_id not in drop]
    drop_entries = [e for e in layout if e.var_id in drop]
    k_idx = np.concatenate(
        [np.arange(e.offset, e.offset + e.size) for e in keep_entries]
    ).astype(int) if keep_entries else np.zeros(0, dtype=int)
    d_idx = np.concatenate(
        [np.arange(e.offset, e.offset + e.size) for e in drop_entries]
    ).astype(int)

    H_kk = ne.H[np.ix_(k_idx, k_idx)]
    H_kd = ne.H[np.ix_(k_idx, d_idx)]
    H_dd = ne.H[np.ix_(d_idx, d_idx)] + 1e-9 * np.eye(d_idx.size)
    try:
        f = cho_factor(H_dd, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularBlock("dropped block not invertible: %s" % exc) from exc
    g_k = ne.g[k_idx]
    g_d = ne.g[d_idx]
    H_p = H_kk - H_kd @ cho_solve(f, H_kd.T)
    H_p = 0.5 * (H_p + H_p.T)
    g_p = g_k - H_kd @ cho_solve(f, g_d)

    entries = [(e.var_id, e.kind, e.size) for e in keep_entries]
    lin = {}
    for e in keep_entries:
        x = values[e.var_id]
        lin[e.var_id] = x if isinstance(x, Se3Pose) else np.array(x, dtype=np.float64)
    return LinearPrior(entries=entries, H=H_p, g=g_p, lin_points=lin)
