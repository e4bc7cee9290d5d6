"""Desk-scale 2-D plane-strain FE simulation of an RVE under transverse tension.

Regular grid of 4-node bilinear elements on the rasterized microstructure;
left edge restrained horizontally, right edge displaced incrementally, free
vertical deformations. Newton iterations with adaptive increment cutbacks.
Fiber/matrix interface debonding is approximated by damage localization in a
one-element interphase ring with a reduced failure strain.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.ndimage
import scipy.sparse
import scipy.sparse.linalg

from . import constitutive as con
from .rve import Rve, rasterize

GAUSS = 1.0 / math.sqrt(3.0)
CURVE_MAGIC = "# microfrac curve v1"
SNAP_MAGIC = b"MFSNAP01"

# Interphase failure strain calibrated so the ring's traction at failure
# initiation sits near the cohesive strength T_c instead of the bulk value.
DEFAULT_INTERPHASE_EPS_T = 0.017


class EsodiNotReachedError(RuntimeError):
    """Raised when the stress-strain curve has no 5% post-peak drop."""


class MeshResolutionError(ValueError):
    """Raised when the requested grid exceeds the element budget."""


@dataclass
class Mesh:
    """Uniform grid of plane-strain quads with a per-element phase tag."""

    nx: int
    ny: int
    width: float
    height: float
    phase: np.ndarray        # (ny, nx) bool, True = fiber
    interphase: np.ndarray   # (ny, nx) bool, matrix ring around fibers

    @property
    def he_x(self):
        return self.width / self.nx

    @property
    def he_y(self):
        return self.height / self.ny

    @property
    def n_elements(self):
        return self.nx * self.ny

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)


@dataclass(frozen=True)
class LoadSchedule:
    """Displacement-controlled ramp to target_strain on the right edge."""

    target_strain: float = 0.02
    n_increments: int = 100
    max_cutbacks: int = 8
    newton_tol: float = 1e-6
    max_newton_iter: int = 25

    def __post_init__(self):
        if self.target_strain <= 0 or self.n_increments < 1:
            raise ValueError("need target_strain > 0 and n_increments >= 1")


@dataclass
class Snapshot:
    applied_strain: float
    homog_stress: float
    u: np.ndarray             # (n_nodes, 2)
    stress: np.ndarray        # (n_elem, 3) element-mean [sxx, syy, sxy]
    von_mises: np.ndarray     # (n_elem,)
    damage: np.ndarray        # (n_elem,)


@dataclass
class SimulationResult:
    mesh: Mesh
    snapshots: list
    completed: bool = True
    diagnostic: str = ""

    @property
    def strains(self):
        return np.array([s.applied_strain for s in self.snapshots])

    @property
    def stresses(self):
        return np.array([s.homog_stress for s in self.snapshots])


def build_mesh(rve: Rve, elems_per_diameter: int = 20, max_elements: int = 4_000_000) -> Mesh:
    """Tag a uniform grid from the rasterized RVE.

    Element size is fiber_diameter / elems_per_diameter, shrunk to divide the
    domain exactly (so the size bound holds).
    """
    spec = rve.spec
    he = 2.0 * spec.fiber_radius / elems_per_diameter
    nx = max(1, math.ceil(spec.width / he - 1e-9))
    ny = max(1, math.ceil(spec.height / he - 1e-9))
    if nx * ny > max_elements:
        raise MeshResolutionError(f"{nx}x{ny} grid exceeds {max_elements} elements")
    phase = rasterize(rve, nx)
    if phase.shape != (ny, nx):  # non-square domain: re-derive rows
        phase = phase[:ny, :] if phase.shape[0] > ny else np.pad(phase, ((0, ny - phase.shape[0]), (0, 0)))
    dilated = scipy.ndimage.binary_dilation(phase, structure=np.ones((3, 3), dtype=bool))
    interphase = dilated & ~phase
    return Mesh(nx=nx, ny=ny, width=spec.width, height=spec.height,
                phase=phase, interphase=interphase)


def _shape_gradients(he_x, he_y):
    """B matrices (4 GPs, 3x8) and weights for one rectangular Q4 element."""
    pts = [(-GAUSS, -GAUSS), (GAUSS, -GAUSS), (GAUSS, GAUSS), (-GAUSS, GAUSS)]
    B = np.zeros((4, 3, 8))
    for g, (xi, eta) in enumerate(pts):
        # dN/dxi, dN/deta for nodes (SW, SE, NE, NW)
        dn_dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
        dn_deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
        dn_dx = dn_dxi * 2.0 / he_x
        dn_dy = dn_deta * 2.0 / he_y
        for a in range(4):
            B[g, 0, 2 * a] = dn_dx[a]
            B[g, 1, 2 * a + 1] = dn_dy[a]
            B[g, 2, 2 * a] = dn_dy[a]
            B[g, 2, 2 * a + 1] = dn_dx[a]
    w = np.full(4, he_x * he_y / 4.0)
    return B, w


def _elastic_d3(e_mpa, nu):
    lam = e_mpa * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = e_mpa / (2.0 * (1.0 + nu))
    return np.array([
        [lam + 2.0 * mu, lam, 0.0],
        [lam, lam + 2.0 * mu, 0.0],
        [0.0, 0.0, mu],
    ])


class FeModel:
    """Assembly-level machinery shared by run() and the test harness."""

    def __init__(self, mesh: Mesh, matrix: con.MatrixParams, fiber: con.FiberParams,
                 interphase_eps_t: float | None = DEFAULT_INTERPHASE_EPS_T):
        self.mesh = mesh
        self.matrix = matrix
        if interphase_eps_t is None:
            self.ring_params = matrix
        else:
            ring_eps_t = min(interphase_eps_t, matrix.eps_t)
            self.ring_params = replace(matrix, eps_t=ring_eps_t)
        e_f, nu_f = fiber.in_plane_isotropic()
        self.fiber_d3 = _elastic_d3(e_f, nu_f)

        ny, nx = mesh.ny, mesh.nx
        self.B, self.w = _shape_gradients(mesh.he_x, mesh.he_y)

        # connectivity: element (ey, ex) -> nodes (SW, SE, NE, NW)
        ex, ey = np.meshgrid(np.arange(nx), np.arange(ny))
        ex = ex.ravel()
        ey = ey.ravel()
        sw = ey * (nx + 1) + ex
        nodes = np.stack([sw, sw + 1, sw + nx + 2, sw + nx + 1], axis=1)
        self.dofmap = np.empty((mesh.n_elements, 8), dtype=np.int64)
        self.dofmap[:, 0::2] = 2 * nodes
        self.dofmap[:, 1::2] = 2 * nodes + 1

        flat_phase = mesh.phase.ravel()
        flat_ring = mesh.interphase.ravel()
        self.fiber_elems = np.flatnonzero(flat_phase)
        self.bulk_elems = np.flatnonzero(~flat_phase & ~flat_ring)
        self.ring_elems = np.flatnonzero(~flat_phase & flat_ring)

        # committed material state, one batch per matrix material
        self.bulk_state = con.MatrixBatch(4 * len(self.bulk_elems))
        self.ring_state = con.MatrixBatch(4 * len(self.ring_elems))
        self.committed_strain = np.zeros((mesh.n_elements, 4, 3))
        self._rows = self.dofmap[:, :, None].repeat(8, axis=2).ravel()
        self._cols = self.dofmap[:, None, :].repeat(8, axis=1).ravel()

    def gp_strains(self, u):
        u_el = u.reshape(-1)[self.dofmap]                       # (n_elem, 8)
        return np.einsum("gik,ek->egi", self.B, u_el)           # (n_elem, 4, 3)

    def evaluate(self, u, dt):
        """Stress, tangent and trial material state at displacement u.

        Strain increments are measured from the committed converged state.
        Returns (f_int, K, trial_bulk, trial_ring, stress_gp).
        """
        mesh = self.mesh
        eps = self.gp_strains(u)
        deps = eps - self.committed_strain
        n_el = mesh.n_elements
        stress = np.zeros((n_el, 4, 3))
        tangent = np.zeros((n_el, 4, 3, 3))

        if len(self.fiber_elems):
            ef = eps[self.fiber_elems]
            stress[self.fiber_elems] = np.einsum("ij,egj->egi", self.fiber_d3, ef)
            tangent[self.fiber_elems] = self.fiber_d3

        trial_bulk = trial_ring = None
        for elems, state, params, label in (
            (self.bulk_elems, self.bulk_state, self.matrix, "bulk"),
            (self.ring_elems, self.ring_state, self.ring_params, "ring"),
        ):
            if not len(elems):
                continue
            d = deps[elems].reshape(-1, 3)
            new_state, sig3, tang3 = con.batch_update(state, d, dt, params)
            stress[elems] = sig3.reshape(-1, 4, 3)
            tangent[elems] = tang3.reshape(-1, 4, 3, 3)
            if label == "bulk":
                trial_bulk = new_state
            else:
                trial_ring = new_state

        f_el = np.einsum("gik,egi,g->ek", self.B, stress, self.w)
        f_int = np.zeros(2 * mesh.n_nodes)
        np.add.at(f_int, self.dofmap.ravel(), f_el.ravel())

        ke = np.einsum("gia,egij,gjb,g->eab", self.B, tangent, self.B, self.w)
        K = scipy.sparse.coo_matrix(
            (ke.ravel(), (self._rows, self._cols)),
            shape=(2 * mesh.n_nodes, 2 * mesh.n_nodes),
        ).tocsr()
        return f_int, K, trial_bulk, trial_ring, stress

    def commit(self, u, trial_bulk, trial_ring):
        self.committed_strain = self.gp_strains(u)
        if trial_bulk is not None:
            self.bulk_state = trial_bulk
        if trial_ring is not None:
            self.ring_state = trial_ring

    # --- boundary node helpers ---------------------------------------------

    def edge_nodes(self, side):
        nx, ny = self.mesh.nx, self.mesh.ny
        cols = np.arange(ny + 1) * (nx + 1)
        if side == "left":
            return cols
        if side == "right":
            return cols + nx
        if side == "bottom":
            return np.arange(nx + 1)
        if side == "top":
            return np.arange(nx + 1) + ny * (nx + 1)
        raise ValueError(side)

    def node_coords(self):
        nx, ny = self.mesh.nx, self.mesh.ny
        gx, gy = np.meshgrid(
            np.arange(nx + 1) * self.mesh.he_x, np.arange(ny + 1) * self.mesh.he_y
        )
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


def solve_equilibrium(model: FeModel, u, fixed_dofs, fixed_vals, dt,
                      tol=1e-6, max_iter=25):
    """Newton-solve the free dofs with given Dirichlet data.

    Backtracking line search on the residual norm: a trial evaluation is
    reused as the next iteration's state, so full Newton steps cost nothing
    extra; backtracking only engages when a step grows the residual (sharp
    softening events). Returns
    (converged, u, trial_bulk, trial_ring, stress_gp, f_int).
    """
    n_dof = 2 * model.mesh.n_nodes
    free = np.setdiff1d(np.arange(n_dof), fixed_dofs, assume_unique=False)
    u = u.copy()
    u[fixed_dofs] = fixed_vals
    f_int, K, tb, tr, stress = model.evaluate(u, dt)
    trial = (tb, tr, stress, f_int)
    r_norm = float(np.linalg.norm(f_int[free], ord=np.inf))
    for _ in range(max_iter):
        reaction_scale = max(float(np.abs(f_int[fixed_dofs]).sum()), 1e-12)
        if r_norm <= tol * reaction_scale:
            return True, u, *trial
        kff = K[free][:, free]
        with warnings.catch_warnings():
            # a fully softened band can make K singular; the NaN guard below
            # turns that into a cutback instead of a crash
            warnings.simplefilter("ignore", scipy.sparse.linalg.MatrixRankWarning)
            du = scipy.sparse.linalg.spsolve(kff, -f_int[free])
        if not np.all(np.isfinite(du)):
            return False, u, *trial
        step = 1.0
        while True:
            u_try = u.copy()
            u_try[free] += step * du
            f_try, K_try, tb_t, tr_t, stress_t = model.evaluate(u_try, dt)
            r_try = float(np.linalg.norm(f_try[free], ord=np.inf))
            if r_try <= (1.0 - 1e-4 * step) * r_norm or step <= 1.0 / 16.0:
                break
            step /= 2.0
        u = u_try
        f_int, K, trial = f_try, K_try, (tb_t, tr_t, stress_t, f_try)
        r_norm = r_try
    return False, u, *trial


def run(mesh: Mesh, matrix: con.MatrixParams, fiber: con.FiberParams,
        schedule: LoadSchedule = LoadSchedule(),
        interphase_eps_t: float | None = DEFAULT_INTERPHASE_EPS_T) -> SimulationResult:
    """Displacement-controlled transverse tension with adaptive cutbacks.

    Pseudo-time for the viscous damage law advances by 1 per base increment
    (scaled proportionally for cutback sub-increments).
    """
    model = FeModel(mesh, matrix, fiber, interphase_eps_t)
    n_dof = 2 * mesh.n_nodes
    u = np.zeros(n_dof)

    left_x = 2 * model.edge_nodes("left")
    right_x = 2 * model.edge_nodes("right")
    pin_y = np.array([2 * model.edge_nodes("left")[0] + 1])  # bottom-left u_y
    fixed = np.concatenate([left_x, right_x, pin_y])

    base = schedule.target_strain / schedule.n_increments
    applied = 0.0
    d_strain = base
    halvings = 0
    snapshots = []
    result = SimulationResult(mesh, snapshots)
    successes = 0

    while applied < schedule.target_strain - 1e-15:
        d_try = min(d_strain, schedule.target_strain - applied)
        target = applied + d_try
        vals = np.concatenate([
            np.zeros(len(left_x)),
            np.full(len(right_x), target * mesh.width),
            np.zeros(1),
        ])
        ok, u_new, tb, tr, stress, f_int = solve_equilibrium(
            model, u, fixed, vals, dt=d_try / base,
            tol=schedule.newton_tol, max_iter=schedule.max_newton_iter,
        )
        if not ok:
            halvings += 1
            successes = 0
            d_strain = d_try / 2.0
            if halvings > schedule.max_cutbacks:
                result.completed = False
                result.diagnostic = (
                    f"no convergence at strain {applied:.6g} after "
                    f"{schedule.max_cutbacks} cutbacks"
                )
                return result
            continue
        u = u_new
        model.commit(u, tb, tr)
        applied = target
        successes += 1
        if successes >= 2 and halvings > 0:
            halvings -= 1
            d_strain = min(base, d_strain * 2.0)
            successes = 0
        snapshots.append(_make_snapshot(model, u, stress, f_int, applied, right_x))
    return result


def _make_snapshot(model, u, stress_gp, f_int, applied, right_x_dofs):
    mesh = model.mesh
    stress_el = stress_gp.mean(axis=1)
    # von Mises of the element-mean stress under plane strain needs sigma_zz;
    # recover it per material from the batched state, fibers elastically.
    szz = np.zeros(mesh.n_elements)
    for elems, state in ((model.bulk_elems, model.bulk_state),
                         (model.ring_elems, model.ring_state)):
        if len(elems):
            szz[elems] = state.sigma[:, 2].reshape(-1, 4).mean(axis=1)
    if len(model.fiber_elems):
        e_f = model.fiber_d3
        # plane strain: sigma_zz = lam * (exx + eyy); lam = D[0,1]
        eps = model.gp_strains(u)[model.fiber_elems].mean(axis=1)
        szz[model.fiber_elems] = e_f[0, 1] * (eps[:, 0] + eps[:, 1])
    v4 = np.stack([stress_el[:, 0], stress_el[:, 1], szz, stress_el[:, 2]], axis=1)
    vm = con.von_mises(v4)

    damage = np.zeros(mesh.n_elements)
    for elems, state in ((model.bulk_elems, model.bulk_state),
                         (model.ring_elems, model.ring_state)):
        if len(elems):
            damage[elems] = state.d.reshape(-1, 4).mean(axis=1)

    homog = float(f_int[right_x_dofs].sum() / mesh.height)
    return Snapshot(
        applied_strain=applied,
        homog_stress=homog,
        u=u.reshape(-1, 2).copy(),
        stress=stress_el,
        von_mises=vm,
        damage=damage,
    )


def detect_esodi(result: SimulationResult) -> int:
    """First post-peak snapshot with homogenized stress <= 95% of the peak."""
    stresses = result.stresses
    if len(stresses) == 0:
        raise EsodiNotReachedError("empty stress-strain curve")
    peak = int(np.argmax(stresses))
    if peak == len(stresses) - 1:
        raise EsodiNotReachedError("no post-peak softening in the curve")
    threshold = 0.95 * stresses[peak]
    post = np.flatnonzero(stresses[peak + 1 :] <= threshold)
    if len(post) == 0:
        raise EsodiNotReachedError("softening never reached a 5% drop")
    return peak + 1 + int(post[0])


def extract_fields(result: SimulationResult, index: int):
    """(von Mises over matrix cells with fibers NaN-masked, damage grid,
    element-centered horizontal displacement grid)."""
    if not 0 <= index < len(result.snapshots):
        raise IndexError(f"snapshot index {index} out of range")
    mesh = result.mesh
    snap = result.snapshots[index]
    vm = snap.von_mises.reshape(mesh.ny, mesh.nx).copy()
    vm[mesh.phase] = np.nan
    damage = snap.damage.reshape(mesh.ny, mesh.nx).copy()
    ux_nodes = snap.u[:, 0].reshape(mesh.ny + 1, mesh.nx + 1)
    ux = 0.25 * (ux_nodes[:-1, :-1] + ux_nodes[:-1, 1:] + ux_nodes[1:, :-1] + ux_nodes[1:, 1:])
    return vm, damage, ux


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_curve(result: SimulationResult, path) -> None:
    lines = [CURVE_MAGIC, "strain,stress"]
    for s in result.snapshots:
        lines.append(f"{s.applied_strain:.17g},{s.homog_stress:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_curve(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != CURVE_MAGIC:
        raise ValueError(f"{path}: not a microfrac curve file")
    rows = [ln.split(",") for ln in lines[2:]]
    return np.array([[float(a), float(b)] for a, b in rows])


def save_snapshots(result: SimulationResult, path) -> None:
    """Binary container: magic, version, grid dims, phase grid, then per
    snapshot (strain, stress, six row-major float64 element fields:
    sxx, syy, sxy, von Mises, damage, ux)."""
    mesh = result.mesh
    with open(path, "wb") as fh:
        fh.write(SNAP_MAGIC)
        fh.write(struct.pack("<IIII", 1, len(result.snapshots), mesh.nx, mesh.ny))
        fh.write(mesh.phase.astype(np.uint8).tobytes())
        for i, snap in enumerate(result.snapshots):
            _, _, ux = extract_fields(result, i)
            fh.write(struct.pack("<dd", snap.applied_strain, snap.homog_stress))
            for grid in (
                snap.stress[:, 0], snap.stress[:, 1], snap.stress[:, 2],
                snap.von_mises, snap.damage, ux.ravel(),
            ):
                fh.write(np.asarray(grid, dtype="<f8").tobytes())


@dataclass
class LoadedSnapshots:
    nx: int
    ny: int
    phase: np.ndarray
    strains: np.ndarray
    stresses: np.ndarray
    fields: dict  # name -> (n_snapshots, ny, nx)


def load_snapshots(path) -> LoadedSnapshots:
    names = ("sxx", "syy", "sxy", "von_mises", "damage", "ux")
    with open(path, "rb") as fh:
        if fh.read(8) != SNAP_MAGIC:
            raise ValueError(f"{path}: not a microfrac snapshot container")
        version, count, nx, ny = struct.unpack("<IIII", fh.read(16))
        if version != 1:
            raise ValueError(f"{path}: unsupported version {version}")
        phase = np.frombuffer(fh.read(nx * ny), dtype=np.uint8).reshape(ny, nx).astype(bool)
        strains = np.empty(count)
        stresses = np.empty(count)
        fields = {name: np.empty((count, ny, nx)) for name in names}
        for i in range(count):
            strains[i], stresses[i] = struct.unpack("<dd", fh.read(16))
            for name in names:
                buf = fh.read(8 * nx * ny)
                fields[name][i] = np.frombuffer(buf, dtype="<f8").reshape(ny, nx)
    return LoadedSnapshots(nx=nx, ny=ny, phase=phase, strains=strains,
                           stresses=stresses, fields=fields)
