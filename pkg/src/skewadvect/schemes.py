"""Two-level time schemes for M dz/dt + K z = 0 and the transient runner.

All schemes work on nodal coefficient vectors ``z`` with either the
consistent mass matrix or its lumped diagonal; the symmetrised variable
u = B^1/2 z is never formed.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import stability
from .sparse import Factorization, as_csr, is_diagonal, matvec, triple_product

SCHEMES = (
    "explicit",
    "rk2",
    "nonstandard",
    "regularized_const_beta",
    "regularized_tau_beta",
    "lax_wendroff_explicit",
    "crank_nicolson",
    "pade4_lumped",
    "lax_wendroff_implicit",
    "theta",
)

# schemes that only make sense with the lumped diagonal
LUMPED_ONLY = {"rk2", "regularized_const_beta", "regularized_tau_beta",
               "lax_wendroff_explicit", "pade4_lumped"}
CONSISTENT_ONLY = {"lax_wendroff_implicit"}
DEFAULT_MASS = {"crank_nicolson": "consistent", "theta": "consistent",
                "lax_wendroff_implicit": "consistent"}

TAU_REF = 2.0**-11 * 1e-2


class SchemeConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str
    tau: float
    T: float = 0.0
    theta: float = 0.5
    beta: float = None
    mu: float = None
    mass: str = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise SchemeConfigError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if self.mass is None:
            object.__setattr__(self, "mass", DEFAULT_MASS.get(self.scheme, "lumped"))
        if self.mass not in ("consistent", "lumped"):
            raise SchemeConfigError(f"mass must be 'consistent' or 'lumped', got {self.mass!r}")
        if self.scheme in LUMPED_ONLY and self.mass != "lumped":
            raise SchemeConfigError(f"{self.scheme} requires the lumped mass")
        if self.scheme in CONSISTENT_ONLY and self.mass != "consistent":
            raise SchemeConfigError(f"{self.scheme} uses the consistent mass")
        if not self.tau > 0:
            raise SchemeConfigError(f"tau must be positive, got {self.tau}")
        if self.T < 0:
            raise SchemeConfigError(f"T must be nonnegative, got {self.T}")
        if abs(self.T / self.tau - round(self.T / self.tau)) > 1e-9 * max(1.0, self.T / self.tau):
            raise SchemeConfigError(f"T = {self.T} is not a whole number of steps tau = {self.tau}")
        if self.scheme == "regularized_const_beta" and not (self.beta is not None and self.beta > 1):
            raise SchemeConfigError("regularized_const_beta needs beta > 1")
        if self.scheme == "regularized_tau_beta" and not (self.beta is not None and self.beta > 0):
            raise SchemeConfigError("regularized_tau_beta needs beta > 0")
        if self.scheme == "nonstandard" and not (self.mu is not None and self.mu > 0):
            raise SchemeConfigError("nonstandard needs mu > 0")

    @property
    def n_steps(self):
        return int(round(self.T / self.tau))


@dataclass
class Stepper:
    """One-step map z -> z' with the precomputed operators it needs.

    ``energy`` is the quadratic form the scheme conserves, when it has one.
    """

    config: SchemeConfig
    advance: callable
    mass: object
    energy: callable = None

    def __call__(self, z):
        return self.advance(z)

    def natural_norm(self, z):
        if self.energy is not None:
            return math.sqrt(max(self.energy(z), 0.0))
        return math.sqrt(z @ matvec(self.mass, z))


def _cache(ops, key, fn):
    if key not in ops.cache:
        ops.cache[key] = fn()
    return ops.cache[key]


def lumped_norm_A(ops):
    return _cache(ops, "norm_A_lumped", lambda: stability.norm_A(ops.K, ops.M_lumped).value)


def lumped_squared(ops):
    """S_D = K^T Ml^-1 K, shared by the rk2/regularized/pade4 schemes."""
    return _cache(ops, "SD", lambda: triple_product(ops.K.T, ops.M_lumped, ops.K))


def _mass(ops, cfg):
    return ops.M_lumped if cfg.mass == "lumped" else ops.M


def _mass_solver(ops, cfg):
    B = _mass(ops, cfg)
    if is_diagonal(B):
        inv = 1.0 / B
        return lambda r: inv * r
    F = _cache(ops, "M_factor", lambda: Factorization(B))
    return F.solve


def _quadratic(A):
    return lambda z: float(z @ matvec(A, z))


def step_explicit(ops, cfg):
    """B z' = B z - tau K z."""
    tau, K = cfg.tau, ops.K
    solve = _mass_solver(ops, cfg)
    return Stepper(cfg, lambda z: z - tau * solve(K @ z), _mass(ops, cfg))


def _lumped_regularized(ops, cfg, c):
    # Ml z' = Ml z - tau K z - (tau^2 c / 2) K^T Ml^-1 K z
    tau, K, inv = cfg.tau, ops.K, 1.0 / ops.M_lumped
    SD = lumped_squared(ops)
    a = 0.5 * tau * tau * c
    return Stepper(cfg, lambda z: z - inv * (tau * (K @ z) + a * (SD @ z)), ops.M_lumped)


def step_rk2(ops, cfg):
    """Second-order Runge-Kutta; -(Ml^-1 K)^2 = Ml^-1 K^T Ml^-1 K."""
    return _lumped_regularized(ops, cfg, 1.0)


def step_regularized(ops, cfg):
    if cfg.scheme == "regularized_const_beta":
        c = cfg.beta
    else:
        c = 1.0 + cfg.beta * cfg.tau
    return _lumped_regularized(ops, cfg, c)


def step_nonstandard(ops, cfg):
    """z' = exp(mu tau) [(1 - mu tau) z - tau B^-1 K z]."""
    tau, mu, K = cfg.tau, cfg.mu, ops.K
    solve = _mass_solver(ops, cfg)
    g = math.exp(mu * tau)
    return Stepper(cfg, lambda z: g * ((1.0 - mu * tau) * z - tau * solve(K @ z)),
                   _mass(ops, cfg))


def step_lax_wendroff_explicit(ops, cfg, check_bound=True):
    """Ml z' = Ml z - tau K z - (tau^2 / 2) G z."""
    if check_bound:
        tau0 = _cache(ops, "tau0_explicit_lw",
                      lambda: stability.lw_tau0(ops.K, ops.M_lumped, ops.G).value)
        if cfg.tau > tau0:
            warnings.warn(f"tau = {cfg.tau} exceeds the explicit Lax-Wendroff limit {tau0:.6e}",
                          stacklevel=3)
    tau, K, G, inv = cfg.tau, ops.K, ops.G, 1.0 / ops.M_lumped
    a = 0.5 * tau * tau
    return Stepper(cfg, lambda z: z - inv * (tau * (K @ z) + a * (G @ z)), ops.M_lumped)


def _implicit(cfg, lhs, rhs, mass, energy=None):
    F = Factorization(lhs)
    rhs = as_csr(rhs)
    return Stepper(cfg, lambda z: F.solve(rhs @ z), mass, energy)


def _sparse_mass(B):
    return sp.diags(B).tocsr() if is_diagonal(B) else B


def step_theta(ops, cfg):
    """(B + theta tau K) z' = (B - (1 - theta) tau K) z."""
    B = _mass(ops, cfg)
    Bs = _sparse_mass(B)
    th, tau, K = cfg.theta, cfg.tau, ops.K
    if th == 0:
        solve = _mass_solver(ops, cfg)
        return Stepper(cfg, lambda z: z - tau * solve(K @ z), B)
    energy = _quadratic(B) if th == 0.5 else None
    return _implicit(cfg, Bs + th * tau * K, Bs - (1 - th) * tau * K, B, energy)


def step_crank_nicolson(ops, cfg):
    """(B + tau/2 K) z' = (B - tau/2 K) z; conserves z^T B z."""
    B = _mass(ops, cfg)
    Bs = _sparse_mass(B)
    h = 0.5 * cfg.tau
    return _implicit(cfg, Bs + h * ops.K, Bs - h * ops.K, B, _quadratic(B))


def step_pade4(ops, cfg, check_bound=True):
    """(2,2) Pade scheme with lumped mass.

    R z' = (Ml - tau/2 K + tau^2/12 K Ml^-1 K) z with
    R = Ml + tau/2 K + tau^2/12 K Ml^-1 K; conserves z^T (Ml - tau^2/12 S_D) z.
    """
    tau = cfg.tau
    if check_bound:
        bound = stability.pade4_bound(lumped_norm_A(ops))
        if not tau < bound:
            raise SchemeConfigError(f"pade4 needs tau < {bound:.6e}, got {tau}")
    Ml = sp.diags(ops.M_lumped).tocsr()
    E = as_csr(Ml - (tau * tau / 12.0) * lumped_squared(ops))
    return _implicit(cfg, E + 0.5 * tau * ops.K, E - 0.5 * tau * ops.K, ops.M_lumped,
                     _quadratic(E))


def step_lax_wendroff_implicit(ops, cfg, check_bound=True):
    """(M - tau^2/12 G)(z' - z)/tau + K (z' + z)/2 = 0; conserves z^T (M - tau^2/12 G) z."""
    tau = cfg.tau
    if check_bound:
        q = _cache(ops, "norm_Q", lambda: stability.norm_Q(ops.G, ops.M).value)
        bound = stability.implicit_lw_bound(q)
        if not tau < bound:
            raise SchemeConfigError(f"implicit Lax-Wendroff needs tau < {bound:.6e}, got {tau}")
    E = as_csr(ops.M - (tau * tau / 12.0) * ops.G)
    return _implicit(cfg, E + 0.5 * tau * ops.K, E - 0.5 * tau * ops.K, ops.M, _quadratic(E))


_BUILDERS = {
    "explicit": step_explicit,
    "rk2": step_rk2,
    "nonstandard": step_nonstandard,
    "regularized_const_beta": step_regularized,
    "regularized_tau_beta": step_regularized,
    "lax_wendroff_explicit": step_lax_wendroff_explicit,
    "crank_nicolson": step_crank_nicolson,
    "pade4_lumped": step_pade4,
    "lax_wendroff_implicit": step_lax_wendroff_implicit,
    "theta": step_theta,
}


def build_stepper(cfg, ops, check_bound=True):
    builder = _BUILDERS[cfg.scheme]
    if cfg.scheme in ("lax_wendroff_explicit", "pade4_lumped", "lax_wendroff_implicit"):
        return builder(ops, cfg, check_bound=check_bound)
    return builder(ops, cfg)


@dataclass
class SchemeState:
    z: np.ndarray
    n: int
    stepper: Stepper

    @property
    def t(self):
        return self.n * self.stepper.config.tau

    def advance(self):
        return SchemeState(self.stepper(self.z), self.n + 1, self.stepper)


@dataclass
class StepReport:
    n: int
    t: float
    norm_M: float
    norm_lumped: float
    norm_E: float
    norm_Kz: float
    growth_ratio: float
    epsilon: float = float("nan")


HISTORY_COLUMNS = ("t", "norm_M", "norm_lumped", "norm_E", "norm_Kz", "growth_ratio", "epsilon")


@dataclass
class TransientResult:
    config: SchemeConfig
    history: list
    z: np.ndarray
    snapshots: dict = field(default_factory=dict)
    blowup_level: int = None


def relative_error(y, yref, M):
    """||y - yref||_M / ||yref||_M."""
    y = getattr(y, "values", y)
    yref = getattr(yref, "values", yref)
    den = float(yref @ (M @ yref))
    if den <= 0:
        raise ValueError("reference field has zero norm")
    d = y - yref
    return math.sqrt(max(float(d @ (M @ d)), 0.0) / den)


def _level_of(t, tau, n_steps):
    k = t / tau
    n = int(round(k))
    if abs(k - n) > 1e-9 * max(1.0, k) or n < 0 or n > n_steps:
        return None
    return n


class _Diagnostics:
    def __init__(self, ops, stepper):
        self.M = ops.M
        self.Ml = ops.M_lumped
        self.K = ops.K
        self.stepper = stepper
        self.F = _cache(ops, "M_factor", lambda: Factorization(ops.M))

    def report(self, n, t, z, prev_norm):
        nat = self.stepper.natural_norm(z)
        E = self.stepper.energy
        Kz = self.K @ z
        return StepReport(
            n=n, t=t,
            norm_M=math.sqrt(max(float(z @ (self.M @ z)), 0.0)),
            norm_lumped=math.sqrt(max(float(z @ (self.Ml * z)), 0.0)),
            norm_E=math.sqrt(max(E(z), 0.0)) if E is not None else float("nan"),
            norm_Kz=math.sqrt(max(float(Kz @ self.F.solve(Kz)), 0.0)),
            growth_ratio=nat / prev_norm if prev_norm > 0 else float("nan"),
        ), nat


def run_transient(cfg, ops, z0, sample_times=(), reference=None, record=True,
                  stepper=None, check_bound=True):
    """Advance ``z0`` over ``cfg.n_steps`` levels.

    ``sample_times`` selects snapshot times (those falling on a time level);
    ``reference`` maps times to reference fields for the relative error.
    Non-finite values stop the run and set ``blowup_level``.
    """
    stepper = stepper or build_stepper(cfg, ops, check_bound=check_bound)
    z = np.array(getattr(z0, "values", z0), dtype=float)
    N, tau = cfg.n_steps, cfg.tau
    want = {}
    for t in sample_times:
        n = _level_of(t, tau, N)
        if n is not None:
            want[n] = t
    ref = {}
    for t, field_ in (reference or {}).items():
        n = _level_of(t, tau, N)
        if n is not None:
            ref[n] = getattr(field_, "values", field_)

    snapshots = {}
    if 0 in want:
        snapshots[want[0]] = z.copy()
    history = []
    diag = _Diagnostics(ops, stepper) if record else None
    prev = stepper.natural_norm(z) if record else 0.0
    blowup = None
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, N + 1):
            z = stepper(z)
            # overflow of the squared norm counts as blow-up too
            if not np.isfinite(z @ z):
                blowup = n
                break
            if record:
                rep, prev = diag.report(n, n * tau, z, prev)
                if n in ref:
                    rep.epsilon = relative_error(z, ref[n], ops.M)
                history.append(rep)
            if n in want:
                snapshots[want[n]] = z.copy()
    return TransientResult(cfg, history, z, snapshots, blowup)


def round_trip(cfg, ops, z0, n_steps, check_bound=True):
    """Run ``n_steps`` forward, reverse the velocity, run ``n_steps`` again."""
    fwd = build_stepper(cfg, ops, check_bound=check_bound)
    bwd = build_stepper(cfg, ops.reversed(), check_bound=check_bound)
    z = np.array(getattr(z0, "values", z0), dtype=float)
    for _ in range(n_steps):
        z = fwd(z)
    for _ in range(n_steps):
        z = bwd(z)
    return z


def reference_solution(cfg, ops, z0, sample_times, tau_ref=TAU_REF):
    """Same scheme at ``tau_ref``; returns {t: field} at ``sample_times``."""
    rcfg = replace(cfg, tau=tau_ref)
    res = run_transient(rcfg, ops, z0, sample_times=sample_times, record=False)
    if res.blowup_level is not None:
        raise FloatingPointError(f"reference run blew up at level {res.blowup_level}")
    return res.snapshots


def sample_grid(T, count=101):
    return [T * k / (count - 1) for k in range(count)]


@dataclass
class ConvergenceResult:
    taus: list
    times: list
    errors: np.ndarray  # (len(taus), len(times)), NaN where t is not a level
    terminal: list
    orders: list


def observed_orders(taus, terminal):
    out = []
    for (t1, e1), (t2, e2) in zip(zip(taus, terminal), zip(taus[1:], terminal[1:])):
        if e1 > 0 and e2 > 0:
            out.append(math.log(e1 / e2) / math.log(t1 / t2))
        else:
            out.append(float("nan"))
    return out


def convergence_study(cfg, ops, z0, taus, reference, times=None):
    """Relative error curves of ``cfg.scheme`` for each step in ``taus``."""
    times = list(times if times is not None else sorted(reference))
    errors = np.full((len(taus), len(times)), np.nan)
    terminal = []
    for i, tau in enumerate(taus):
        run = run_transient(replace(cfg, tau=tau), ops, z0, sample_times=times, record=False)
        if run.blowup_level is not None:
            terminal.append(float("inf"))
            continue
        for j, t in enumerate(times):
            if t in run.snapshots and t in reference:
                errors[i, j] = relative_error(run.snapshots[t], reference[t], ops.M)
        terminal.append(relative_error(run.z, reference[max(reference)], ops.M))
    return ConvergenceResult(list(taus), times, errors, terminal, observed_orders(taus, terminal))
