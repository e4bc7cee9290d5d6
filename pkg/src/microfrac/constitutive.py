"""Point-level material laws: elasto-plastic damaging matrix, elastic fiber,
and a bilinear cohesive traction-separation law.

Matrix model: Tschoegl pressure-sensitive yield onset, von Mises (J2) flow
with Ramberg-Osgood tangent hardening, strain-based Tschoegl failure
initiation, and viscous Simo-Ju damage evolution penalizing the
elasto-plastic stiffness by (1 - d).

Symmetric in-plane tensors are stored in a 4-component Voigt order
[xx, yy, zz, xy] with TENSOR shear components (eps_xy = gamma_xy / 2);
the solver-facing API converts to/from plane-strain engineering triplets
[xx, yy, gamma_xy]. Stresses are in MPa; moduli fields are in GPa as in
the material table and converted internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Equation symbols (a, b) are the material table's (H, n).
TABLE1_MATRIX = dict(
    E=3.9, nu=0.39, sigma_c=79.0, sigma_t=62.0, a=20000.0, b=12.0,
    eps_c=0.35, eps_t=0.04, A=0.95, B=2.0, mu_visc=10.0,
)
TABLE1_FIBER = dict(E1=233.0, E2=23.1, G12=8.96, G23=8.27, nu12=0.2)
TABLE1_CZM = dict(T_c=70.0, delta_c=1.0, G_c=8.75)

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 80

# Voigt-4 helpers (tensor shear components).
_W = np.array([1.0, 1.0, 1.0, 2.0])  # double-contraction metric


def _ddot(a, b):
    return (a * b * _W).sum(axis=-1)


def _dev(v):
    m = (v[..., 0] + v[..., 1] + v[..., 2]) / 3.0
    out = v.copy()
    out[..., 0] -= m
    out[..., 1] -= m
    out[..., 2] -= m
    return out


def _i1(v):
    return v[..., 0] + v[..., 1] + v[..., 2]


def _j2(v):
    d = _dev(v)
    return 0.5 * _ddot(d, d)


def von_mises(v):
    """Von Mises equivalent of a Voigt-4 stress."""
    return np.sqrt(np.maximum(3.0 * _j2(v), 0.0))


def strain3_to_v4(e3):
    e3 = np.asarray(e3, dtype=float)
    out = np.zeros(e3.shape[:-1] + (4,))
    out[..., 0] = e3[..., 0]
    out[..., 1] = e3[..., 1]
    out[..., 3] = e3[..., 2] / 2.0
    return out


def stress_v4_to_3(s4):
    return np.stack([s4[..., 0], s4[..., 1], s4[..., 3]], axis=-1)


def _as_v4(t):
    """Accept a Voigt-4 vector or a symmetric 3x3 matrix."""
    t = np.asarray(t, dtype=float)
    if t.shape == (3, 3):
        return np.array([t[0, 0], t[1, 1], t[2, 2], t[0, 1]]), t
    return t, None


def _invariants(t):
    v, mat = _as_v4(t)
    if mat is not None:
        i1 = np.trace(mat)
        d = mat - i1 / 3.0 * np.eye(3)
        return i1, 0.5 * float((d * d).sum())
    return _i1(v), _j2(v)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixParams:
    """Epoxy matrix parameters; units follow the material table (E in GPa,
    strengths in MPa, a in MPa)."""

    E: float
    nu: float
    sigma_t: float
    sigma_c: float
    a: float
    b: float
    eps_t: float
    eps_c: float
    A: float
    B: float
    mu_visc: float
    tau0: float | None = None  # per-point capture at failure initiation when None

    def __post_init__(self):
        if self.E <= 0 or not (0.0 < self.nu < 0.5):
            raise ValueError("need E > 0 and 0 < nu < 0.5")
        if not (self.sigma_c >= self.sigma_t > 0):
            raise ValueError("need sigma_c >= sigma_t > 0")
        if not (self.eps_c >= self.eps_t > 0):
            raise ValueError("need eps_c >= eps_t > 0")
        if not (0.0 < self.A < 1.0) or self.B <= 0 or self.mu_visc <= 0:
            raise ValueError("need 0 < A < 1, B > 0, mu_visc > 0")

    @property
    def E_mpa(self):
        return 1000.0 * self.E

    @property
    def shear_mpa(self):
        return self.E_mpa / (2.0 * (1.0 + self.nu))

    @property
    def lame_mpa(self):
        return self.E_mpa * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    def elastic_d4(self):
        lam, mu = self.lame_mpa, self.shear_mpa
        d = 2.0 * mu * np.eye(4)
        d[:3, :3] += lam
        return d


@dataclass(frozen=True)
class FiberParams:
    """Transversely isotropic carbon fiber; moduli in GPa."""

    E1: float
    E2: float
    G12: float
    G23: float
    nu12: float

    def __post_init__(self):
        if min(self.E1, self.E2, self.G12, self.G23) <= 0:
            raise ValueError("fiber moduli must be positive")

    def in_plane_isotropic(self):
        """(E_mpa, nu) of the in-plane isotropic reduction: E = E2, nu = nu12."""
        return 1000.0 * self.E2, self.nu12


@dataclass(frozen=True)
class CzmParams:
    """Bilinear cohesive law: strength T_c (MPa), peak-traction opening
    delta_c (nm), fracture toughness G_c (N/m)."""

    T_c: float
    delta_c: float
    G_c: float
    zeta: float = 0.0

    def __post_init__(self):
        if min(self.T_c, self.delta_c, self.G_c) <= 0 or self.zeta < 0:
            raise ValueError("T_c, delta_c, G_c must be positive; zeta >= 0")
        if self.G_c_mpa_nm <= 0.5 * self.T_c * self.delta_c:
            raise ValueError("G_c too small: no softening branch exists")

    @property
    def G_c_mpa_nm(self):
        return 1000.0 * self.G_c  # 1 N/m = 1000 MPa*nm

    @property
    def delta_f(self):
        """Zero-traction opening (nm) of the bilinear envelope."""
        return 2.0 * self.G_c_mpa_nm / self.T_c

    @property
    def penalty_stiffness(self):
        """Linear contact penalty (MPa/nm) against interpenetration."""
        return 10.0 * self.T_c / self.delta_c


def default_matrix_params(**overrides) -> MatrixParams:
    return MatrixParams(**{**TABLE1_MATRIX, **overrides})


def default_fiber_params(**overrides) -> FiberParams:
    return FiberParams(**{**TABLE1_FIBER, **overrides})


def default_czm_params(**overrides) -> CzmParams:
    return CzmParams(**{**TABLE1_CZM, **overrides})


_MATRIX_KEYS = {
    "E": "E", "nu": "nu", "sigma_c": "sigma_c", "sigma_t": "sigma_t",
    "H": "a", "n": "b", "eps_c": "eps_c", "eps_t": "eps_t",
    "A": "A", "B": "B", "mu": "mu_visc",
}
_FIBER_KEYS = {"E1": "E1", "E2": "E2", "G12": "G12", "G23": "G23", "nu12": "nu12"}
_CZM_KEYS = {"T_c": "T_c", "delta_c": "delta_c", "G_c": "G_c", "zeta": "zeta"}


def load_material_file(path):
    """Flat key=value material file using the table's symbol names.

    Fiber moduli are interpreted in GPa (the table's magnitudes only make
    sense in GPa despite its MPa column label). Returns
    (MatrixParams, FiberParams, CzmParams).
    """
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: malformed line {raw!r}")
            key, val = (tok.strip() for tok in line.split("=", 1))
            values[key] = float(val)
    known = set(_MATRIX_KEYS) | set(_FIBER_KEYS) | set(_CZM_KEYS)
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    matrix = {dst: values[src] for src, dst in _MATRIX_KEYS.items() if src in values}
    fiber = {dst: values[src] for src, dst in _FIBER_KEYS.items() if src in values}
    czm = {dst: values[src] for src, dst in _CZM_KEYS.items() if src in values}
    return (
        default_matrix_params(**matrix),
        default_fiber_params(**fiber),
        default_czm_params(**czm),
    )


def save_material_file(path, matrix: MatrixParams, fiber: FiberParams, czm: CzmParams):
    inv_m = {v: k for k, v in _MATRIX_KEYS.items()}
    lines = ["# microfrac material parameters (table symbol names)"]
    for fname in ("E", "nu", "sigma_c", "sigma_t", "a", "b", "eps_c", "eps_t", "A", "B", "mu_visc"):
        lines.append(f"{inv_m[fname]}={getattr(matrix, fname):.9g}")
    for key, fname in _FIBER_KEYS.items():
        lines.append(f"{key}={getattr(fiber, fname):.9g}")
    for key, fname in _CZM_KEYS.items():
        lines.append(f"{key}={getattr(czm, fname):.9g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# scalar criteria
# ---------------------------------------------------------------------------

def yield_function(sigma, p: MatrixParams) -> float:
    """Tschoegl yield value: 6*J2 + 2*I1*(sigma_c - sigma_t) - 2*sigma_c*sigma_t.

    Negative inside the elastic domain, zero on the surface.
    """
    i1, j2 = _invariants(sigma)
    return float(6.0 * j2 + 2.0 * i1 * (p.sigma_c - p.sigma_t) - 2.0 * p.sigma_c * p.sigma_t)


def failure_criterion(eps, p: MatrixParams) -> float:
    """Strain-space Tschoegl value; >= 0 signals failure initiation."""
    i1, j2 = _invariants(eps)
    return float(6.0 * j2 + 2.0 * i1 * (p.eps_c - p.eps_t) - 2.0 * p.eps_c * p.eps_t)


def hardening_modulus(sigma_von: float, sigma_y: float, p: MatrixParams) -> float:
    """Ramberg-Osgood tangent of the plastic branch: a * (sigma_y / sigma_von)^b."""
    if not sigma_y > 0 or sigma_von < sigma_y:
        raise ValueError("need sigma_von >= sigma_y > 0")
    return p.a * (sigma_y / sigma_von) ** p.b


def damage_driving(energy: float) -> float:
    """tau = sqrt(2 * Xi) from a strain energy density Xi >= 0."""
    if energy < 0:
        raise ValueError("strain energy must be non-negative")
    return math.sqrt(2.0 * energy)


def damage_G(tau: float, p: MatrixParams, tau0: float | None = None) -> float:
    """Damage function G(tau) = 1 - tau0*(1-A)/tau - A*exp(B*(tau0 - tau))."""
    t0 = p.tau0 if tau0 is None else tau0
    if t0 is None:
        raise ValueError("tau0 not set: pass tau0 or use MatrixParams.tau0")
    if not t0 > 0 or tau < t0:
        raise ValueError("need tau >= tau0 > 0")
    return 1.0 - t0 * (1.0 - p.A) / tau - p.A * math.exp(p.B * (t0 - tau))


def damage_update(d: float, Y: float, G: float, dt: float, mu_visc: float):
    """Viscous damage step; applied only when G > 0, Y > 0 and G - Y > 0.

    d' = d + (dt / (1 + mu*dt)) * (G - Y)
    Y' = (Y + mu*dt*G) / (1 + mu*dt)
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not (G > 0.0 and Y > 0.0 and G - Y > 0.0):
        return d, Y
    mdt = mu_visc * dt
    d_new = min(1.0, d + (dt / (1.0 + mdt)) * (G - Y))
    y_new = (Y + mdt * G) / (1.0 + mdt)
    return d_new, y_new


# ---------------------------------------------------------------------------
# matrix point state
# ---------------------------------------------------------------------------

@dataclass
class PointState:
    """State of one matrix material point (Voigt-4 tensors)."""

    eps: np.ndarray = field(default_factory=lambda: np.zeros(4))
    eps_p: np.ndarray = field(default_factory=lambda: np.zeros(4))
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(4))
    eps_p_eq: float = 0.0
    sigma_y0: float = 0.0     # von Mises stress at plastic onset (0 = not yielded)
    sigma_y_cur: float = 0.0  # current flow stress
    d: float = 0.0
    Y: float = 0.0
    tau0: float = 0.0         # damage threshold captured at failure initiation
    yielded: bool = False
    damaged: bool = False


class MatrixBatch:
    """State arrays for n matrix points updated in lockstep.

    All update entry points are pure: they return a new MatrixBatch and
    leave the receiver untouched.
    """

    ARRAYS2 = ("eps", "eps_p", "sigma")
    ARRAYS1 = ("eps_p_eq", "sigma_y0", "sigma_y_cur", "d", "Y", "tau0")
    FLAGS = ("yielded", "damaged")

    def __init__(self, n: int):
        self.n = n
        for name in self.ARRAYS2:
            setattr(self, name, np.zeros((n, 4)))
        for name in self.ARRAYS1:
            setattr(self, name, np.zeros(n))
        for name in self.FLAGS:
            setattr(self, name, np.zeros(n, dtype=bool))

    def copy(self):
        out = MatrixBatch(self.n)
        for name in self.ARRAYS2 + self.ARRAYS1 + self.FLAGS:
            setattr(out, name, getattr(self, name).copy())
        return out

    def point(self, i: int) -> PointState:
        return PointState(
            eps=self.eps[i].copy(), eps_p=self.eps_p[i].copy(),
            sigma=self.sigma[i].copy(), eps_p_eq=float(self.eps_p_eq[i]),
            sigma_y0=float(self.sigma_y0[i]), sigma_y_cur=float(self.sigma_y_cur[i]),
            d=float(self.d[i]), Y=float(self.Y[i]), tau0=float(self.tau0[i]),
            yielded=bool(self.yielded[i]), damaged=bool(self.damaged[i]),
        )

    def set_point(self, i: int, s: PointState):
        self.eps[i] = s.eps
        self.eps_p[i] = s.eps_p
        self.sigma[i] = s.sigma
        self.eps_p_eq[i] = s.eps_p_eq
        self.sigma_y0[i] = s.sigma_y0
        self.sigma_y_cur[i] = s.sigma_y_cur
        self.d[i] = s.d
        self.Y[i] = s.Y
        self.tau0[i] = s.tau0
        self.yielded[i] = s.yielded
        self.damaged[i] = s.damaged


def _tschoegl_batch(sig, p):
    return 6.0 * _j2(sig) + 2.0 * _i1(sig) * (p.sigma_c - p.sigma_t) - 2.0 * p.sigma_c * p.sigma_t


def _failure_batch(eps, p):
    return 6.0 * _j2(eps) + 2.0 * _i1(eps) * (p.eps_c - p.eps_t) - 2.0 * p.eps_c * p.eps_t


def _onset_scale(sig, p):
    """Scale s in (0, 1] with tschoegl(s * sig) = 0 along the radial path."""
    a = 6.0 * _j2(sig)
    b = 2.0 * _i1(sig) * (p.sigma_c - p.sigma_t)
    c = 2.0 * p.sigma_c * p.sigma_t
    disc = np.maximum(b * b + 4.0 * a * c, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(a > 1e-12 * c, (-b + np.sqrt(disc)) / (2.0 * a), c / np.maximum(b, 1e-300))
    return np.clip(s, 0.0, 1.0)


def batch_update(batch: MatrixBatch, deps3: np.ndarray, dt: float, p: MatrixParams):
    """Advance all points by engineering strain increments deps3 (n, 3).

    Returns (new_batch, sigma3 (n, 3), tangent3 (n, 3, 3)). The tangent is
    algorithmically consistent with the discrete update map in every regime
    (elastic, plastic flow, active damage growth).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = batch.n
    out = batch.copy()
    d4 = p.elastic_d4()
    d4_inv = np.linalg.inv(d4)
    mu = p.shear_mpa

    deps4 = strain3_to_v4(np.asarray(deps3, dtype=float))
    eps_new = batch.eps + deps4
    eps_e_tr = eps_new - batch.eps_p
    sig_tr = eps_e_tr @ d4.T
    q_tr = von_mises(sig_tr)

    # --- plastic onset (Tschoegl) and continued yield (von Mises) ----------
    onset = (~batch.yielded) & (_tschoegl_batch(sig_tr, p) > 0.0)
    sigma_y0 = batch.sigma_y0.copy()
    sigma_y_cur = batch.sigma_y_cur.copy()
    if onset.any():
        s = _onset_scale(sig_tr[onset], p)
        sy = s * q_tr[onset]
        valid = sy > 1e-9 * p.sigma_t  # hydrostatic corner: no deviatoric return
        idx = np.flatnonzero(onset)[valid]
        sigma_y0[idx] = (sy[valid])
        sigma_y_cur[idx] = sy[valid]
        onset = np.zeros(n, dtype=bool)
        onset[idx] = True
    yielded = batch.yielded | onset
    plastic = yielded & (q_tr > sigma_y_cur * (1.0 + 1e-12)) & (q_tr > 0.0)

    dl = np.zeros(n)
    q_new = q_tr.copy()
    h_new = np.zeros(n)
    dlam_dqtr = np.zeros(n)
    if plastic.any():
        m = plastic
        sy_old = sigma_y_cur[m]
        sy0 = sigma_y0[m]
        qt = q_tr[m]

        def residual(lam):
            q = np.maximum(qt - 3.0 * mu * lam, sy0)
            h = p.a * (sy0 / q) ** p.b
            return qt - 3.0 * mu * lam - sy_old - h * lam, q, h

        # R(0) = q_tr - sy_old > 0 and R(lam_max) <= 0: the root is bracketed,
        # so Newton falls back to bisection whenever it leaves the bracket.
        lo = np.zeros(qt.shape)
        hi = (qt - sy0) / (3.0 * mu)
        lam = np.zeros(qt.shape)
        converged = np.zeros(qt.shape, dtype=bool)
        for _ in range(NEWTON_MAX_ITER):
            r, q, h = residual(lam)
            converged = np.abs(r) <= NEWTON_TOL * qt
            if converged.all():
                break
            lo = np.where(r > 0, lam, lo)
            hi = np.where(r < 0, lam, hi)
            dr = -3.0 * mu - h * (1.0 + 3.0 * mu * p.b * lam / q)
            step = lam - r / dr
            outside = (step <= lo) | (step >= hi)
            lam = np.where(converged, lam, np.where(outside, 0.5 * (lo + hi), step))
        else:
            r, q, h = residual(lam)
            worst = float(np.max(np.abs(r) / qt))
            if worst > 1e-8:
                raise RuntimeError(f"return mapping stalled, residual {worst:.3e}")
        r, q, h = residual(lam)
        dl[m] = lam
        q_new[m] = q
        h_new[m] = h
        dlam_dqtr[m] = (1.0 + p.b * h * lam / q) / (3.0 * mu + h * (1.0 + 3.0 * mu * p.b * lam / q))

    s_tr = _dev(sig_tr)
    with np.errstate(divide="ignore", invalid="ignore"):
        flow = np.where(plastic[:, None], s_tr / np.maximum(q_tr, 1e-300)[:, None], 0.0)
    eps_p_new = batch.eps_p + 1.5 * dl[:, None] * flow
    sig_eff = sig_tr - 3.0 * mu * dl[:, None] * flow
    sigma_y_cur = np.where(plastic, q_new, sigma_y_cur)
    eps_p_eq = batch.eps_p_eq + dl
    eps_e = eps_new - eps_p_new

    # --- consistent elastoplastic tangent (Voigt-4, tensor shear) ----------
    tang4 = np.broadcast_to(d4, (n, 4, 4)).copy()
    if plastic.any():
        m = plastic
        pdev = np.eye(4)
        pdev[:3, :3] -= 1.0 / 3.0
        ws = s_tr[m] * _W  # metric-weighted deviator
        coef_p = 6.0 * mu**2 * dl[m] / q_tr[m]
        coef_n = 9.0 * mu**2 * (dlam_dqtr[m] - dl[m] / q_tr[m]) / q_tr[m] ** 2
        tang4[m] -= coef_p[:, None, None] * pdev
        tang4[m] -= coef_n[:, None, None] * np.einsum("ki,kj->kij", s_tr[m], ws)

    # --- failure initiation and damage evolution ---------------------------
    tau = np.sqrt(np.maximum(2.0 * 0.5 * _ddot(sig_eff, eps_e), 0.0))
    init = (~batch.damaged) & (_failure_batch(eps_new, p) >= 0.0)
    tau0 = batch.tau0.copy()
    fixed0 = p.tau0 if p.tau0 is not None else None
    tau0[init] = fixed0 if fixed0 is not None else np.maximum(tau[init], 1e-12)
    damaged = batch.damaged | init

    d_old = batch.d
    y_old = batch.Y.copy()
    mdt = p.mu_visc * dt
    c = dt / (1.0 + mdt)
    grow = damaged & (tau > tau0)
    G = np.zeros(n)
    if grow.any():
        t0 = tau0[grow]
        tg = tau[grow]
        G[grow] = 1.0 - t0 * (1.0 - p.A) / tg - p.A * np.exp(p.B * (t0 - tg))
    # Bootstrap: the printed evolution law freezes (d, Y) while Y == 0, so the
    # first growing step seeds Y with its own relaxation rule before updating d.
    boot = grow & (y_old == 0.0) & (G > 0.0)
    y_seed = np.where(boot, mdt * G / (1.0 + mdt), y_old)
    active = grow & (G > 0.0) & (y_seed > 0.0) & (G - y_seed > 0.0)
    d_new = np.where(active, d_old + c * (G - y_seed), d_old)
    clamped = d_new >= 1.0
    d_new = np.minimum(d_new, 1.0)
    y_new = np.where(active, (y_seed + mdt * G) / (1.0 + mdt), y_seed)

    sigma = (1.0 - d_new)[:, None] * sig_eff

    # --- damage contribution to the tangent --------------------------------
    tang4 *= (1.0 - d_new)[:, None, None]
    dmask = active & ~clamped
    if dmask.any():
        t0 = tau0[dmask]
        tg = tau[dmask]
        dG = t0 * (1.0 - p.A) / tg**2 + p.A * p.B * np.exp(p.B * (t0 - tg))
        dd_dG = np.where(boot[dmask], c / (1.0 + mdt), c)
        # dtau/deps = (D_el^-1 D_ep)^T W sig_eff / tau
        dep_over_el = np.einsum("ij,kjl->kil", d4_inv, tang4[dmask] / (1.0 - d_new[dmask])[:, None, None])
        wsig = sig_eff[dmask] * _W
        dtau = np.einsum("kji,kj->ki", dep_over_el, wsig) / tg[:, None]
        grad_d = (dd_dG * dG)[:, None] * dtau
        tang4[dmask] -= np.einsum("ki,kj->kij", sig_eff[dmask], grad_d)

    # --- commit -------------------------------------------------------------
    out.eps = eps_new
    out.eps_p = eps_p_new
    out.sigma = sigma
    out.eps_p_eq = eps_p_eq
    out.sigma_y0 = sigma_y0
    out.sigma_y_cur = sigma_y_cur
    out.d = d_new
    out.Y = y_new
    out.tau0 = tau0
    out.yielded = yielded
    out.damaged = damaged

    # Reduce to plane-strain engineering 3x3: columns scale by d(eps4)/d(eps3).
    tang3 = np.empty((n, 3, 3))
    rows = [0, 1, 3]
    for i3, i4 in enumerate(rows):
        for j3, j4 in enumerate(rows):
            colscale = 0.5 if j4 == 3 else 1.0
            tang3[:, i3, j3] = tang4[:, i4, j4] * colscale
    return out, stress_v4_to_3(sigma), tang3


def matrix_stress_update(state: PointState, deps3, dt: float, p: MatrixParams):
    """Advance one matrix point by an engineering strain increment.

    Returns (new_state, sigma3, tangent3x3); thin wrapper over the batched
    update so both paths share one implementation.
    """
    batch = MatrixBatch(1)
    batch.set_point(0, state)
    new_batch, sig3, tang3 = batch_update(batch, np.asarray(deps3, dtype=float)[None, :], dt, p)
    return new_batch.point(0), sig3[0], tang3[0]


# ---------------------------------------------------------------------------
# cohesive zone law
# ---------------------------------------------------------------------------

@dataclass
class CzmState:
    """History of one cohesive point: peak effective opening and energy spent."""

    delta_max: float = 0.0
    dissipated: float = 0.0  # N/m


def czm_traction(delta_n: float, delta_t: float, delta_dot: float,
                 state: CzmState, p: CzmParams):
    """Bilinear traction-separation with secant unloading and viscous term.

    Openings in nm, rate in nm per unit pseudo-time, traction in MPa.
    Returns (traction, new_state). Requires delta_n >= 0; compressive
    contact is the solver's job via CzmParams.penalty_stiffness.
    """
    if delta_n < 0:
        raise ValueError("delta_n must be >= 0 (contact handled by penalty)")
    delta = math.hypot(delta_n, delta_t)
    d_max = max(state.delta_max, delta)
    d_f = p.delta_f

    def envelope(x):
        if x <= p.delta_c:
            return p.T_c * x / p.delta_c
        if x < d_f:
            return p.T_c * (d_f - x) / (d_f - p.delta_c)
        return 0.0

    if delta >= d_max - 1e-15 * max(d_max, 1.0):
        traction = envelope(delta)
    else:
        # Secant unloading through the origin from the historic peak.
        traction = envelope(d_max) / d_max * delta if d_max > 0 else 0.0

    traction += p.zeta * delta_dot

    # Dissipated envelope area up to the historic peak, minus stored secant energy.
    dc, tc = p.delta_c, p.T_c
    if d_max <= dc:
        area = 0.5 * d_max * envelope(d_max)
    elif d_max < d_f:
        area = 0.5 * dc * tc + 0.5 * (envelope(d_max) + tc) * (d_max - dc)
    else:
        area = 0.5 * dc * tc + 0.5 * tc * (d_f - dc)
    stored = 0.5 * envelope(d_max) * d_max
    new_state = CzmState(delta_max=d_max, dissipated=(area - stored) / 1000.0)
    return traction, new_state
