"""Corotational beam kernels for planar and spatial lattices.

All kernels are batched: they take arrays describing ``n`` beams at once and
return per-beam energies, gradients and Hessians.  The deformation measure is
corotational, so rigid-body motions of arbitrary magnitude carry zero energy
while the local strain/curvature response stays linear elastic.

Degrees of freedom per beam, in kernel order:

* planar (2D):  ``(ux_k, uy_k, th_k, ux_l, uy_l, th_l)`` with scalar
  cross-section rotations,
* spatial (3D): ``(u_k[3], th_k[3], u_l[3], th_l[3])`` with rotation-vector
  parameterized cross-section rotations.

Planar derivatives are analytic.  Spatial strain derivatives are obtained by
complex-step differentiation of the strain map, which is exact to machine
precision; the strain code is therefore written complex-safe (no ``abs`` on
potentially complex values, branch tests on real parts only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class BeamKernelError(ValueError):
    """Raised for invalid cross-section data or degenerate beam states."""


# ---------------------------------------------------------------------------
# cross-section properties
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BeamProperties:
    """Linear-elastic material and cross-section data shared by a batch.

    ``inertia_2`` / ``inertia_3`` are the second moments about the local
    transverse axes (equal for circular sections), ``torsion_constant`` is
    only used by spatial kernels, and ``fiber_distance`` is the distance from
    the neutral axis to the outermost fiber used in stress recovery.
    """

    young_modulus: float
    poisson_ratio: float
    area: float
    inertia_2: float
    inertia_3: float
    torsion_constant: float
    fiber_distance: float
    timoshenko: bool = False
    shear_correction: float = 1.2

    def __post_init__(self):
        if self.young_modulus <= 0.0 or self.area <= 0.0:
            raise BeamKernelError("need positive Young's modulus and area")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise BeamKernelError(
                f"Poisson ratio {self.poisson_ratio} outside (-1, 0.5)")
        if min(self.inertia_2, self.inertia_3, self.fiber_distance) <= 0.0:
            raise BeamKernelError("need positive section inertia and fiber distance")

    @property
    def shear_modulus(self) -> float:
        return 0.5 * self.young_modulus / (1.0 + self.poisson_ratio)

    @staticmethod
    def rectangle(young_modulus: float, poisson_ratio: float, thickness: float,
                  depth: float = 1.0, timoshenko: bool = False) -> "BeamProperties":
        """Rectangular section of in-plane thickness ``t`` and out-of-plane
        ``depth`` (unit depth for plane models).  Bending is about the
        out-of-plane axis, so I = depth * t^3 / 12."""
        if thickness <= 0.0 or depth <= 0.0:
            raise BeamKernelError("need positive thickness and depth")
        area = thickness * depth
        inertia = depth * thickness ** 3 / 12.0
        weak = thickness * depth ** 3 / 12.0
        return BeamProperties(
            young_modulus=young_modulus, poisson_ratio=poisson_ratio,
            area=area, inertia_2=weak, inertia_3=inertia,
            torsion_constant=min(inertia, weak), fiber_distance=0.5 * thickness,
            timoshenko=timoshenko, shear_correction=1.2)

    @staticmethod
    def circle(young_modulus: float, poisson_ratio: float, diameter: float,
               timoshenko: bool = False) -> "BeamProperties":
        """Solid circular section of the given diameter."""
        if diameter <= 0.0:
            raise BeamKernelError("need positive diameter")
        area = 0.25 * math.pi * diameter ** 2
        inertia = math.pi * diameter ** 4 / 64.0
        return BeamProperties(
            young_modulus=young_modulus, poisson_ratio=poisson_ratio,
            area=area, inertia_2=inertia, inertia_3=inertia,
            torsion_constant=2.0 * inertia, fiber_distance=0.5 * diameter,
            timoshenko=timoshenko, shear_correction=1.2)


def _bending_block(props: BeamProperties, inertia: float,
                   length: np.ndarray) -> np.ndarray:
    """Symmetric 2x2 end-rotation stiffness for one bending plane, (n, 2, 2).

    Euler-Bernoulli by default; with ``timoshenko`` the block is softened by
    the shear parameter Phi = 12 E I kappa / (G A L^2).
    """
    ei = props.young_modulus * inertia
    n = length.shape[0]
    if props.timoshenko:
        phi = (12.0 * ei * props.shear_correction
               / (props.shear_modulus * props.area * length ** 2))
    else:
        phi = np.zeros(n)
    scale = ei / (length * (1.0 + phi))
    block = np.empty((n, 2, 2))
    block[:, 0, 0] = block[:, 1, 1] = scale * (4.0 + phi)
    block[:, 0, 1] = block[:, 1, 0] = scale * (2.0 - phi)
    return block


# ---------------------------------------------------------------------------
# planar kernel (analytic)
# ---------------------------------------------------------------------------

def _planar_state(axis, length, dofs):
    """Shared corotational bookkeeping: current chord, unit vectors and the
    frame-invariant strain triple (elongation, end rotations relative to the
    rotated chord)."""
    u_k = dofs[:, 0:2]
    u_l = dofs[:, 3:5]
    chord = length[:, None] * axis + u_l - u_k
    ln = np.linalg.norm(chord, axis=1)
    if np.any(ln < 1e-12 * length):
        raise BeamKernelError("beam collapsed to zero length")
    e = chord / ln[:, None]
    delta = ln - length
    # chord rotation relative to the rest axis, wrapped to (-pi, pi]
    rot = np.arctan2(e[:, 1], e[:, 0]) - np.arctan2(axis[:, 1], axis[:, 0])
    th_k = dofs[:, 2] - rot
    th_l = dofs[:, 5] - rot
    th_k = np.arctan2(np.sin(th_k), np.cos(th_k))
    th_l = np.arctan2(np.sin(th_l), np.cos(th_l))
    return chord, ln, e, delta, th_k, th_l


def planar_strains(axis: np.ndarray, length: np.ndarray,
                   dofs: np.ndarray) -> np.ndarray:
    """Corotational strain triple ``(delta, th_k, th_l)`` per beam, (n, 3).

    ``axis`` holds rest-state unit vectors (n, 2), ``length`` rest lengths
    (n,), ``dofs`` the 6 end degrees of freedom per beam.
    """
    _, _, _, delta, th_k, th_l = _planar_state(axis, length, dofs)
    return np.stack([delta, th_k, th_l], axis=1)


def planar_energy(props: BeamProperties, axis: np.ndarray, length: np.ndarray,
                  dofs: np.ndarray) -> np.ndarray:
    """Stored energy per beam, (n,)."""
    strains = planar_strains(axis, length, dofs)
    bend = _bending_block(props, props.inertia_3, length)
    th = strains[:, 1:3]
    ea = props.young_modulus * props.area
    w_ax = 0.5 * ea / length * strains[:, 0] ** 2
    w_bd = 0.5 * np.einsum("ni,nij,nj->n", th, bend, th)
    return w_ax + w_bd


def planar_gradient_hessian(props: BeamProperties, axis: np.ndarray,
                            length: np.ndarray, dofs: np.ndarray,
                            with_hessian: bool = True):
    """Energy, gradient (n, 6) and exact Hessian (n, 6, 6) of the batch.

    The Hessian includes the full geometric terms from the rotation of the
    chord frame, so a finite-difference check of the gradient reproduces it
    to truncation error even at large rotations.
    """
    n = dofs.shape[0]
    _, ln, e, delta, th_k, th_l = _planar_state(axis, length, dofs)
    bend = _bending_block(props, props.inertia_3, length)
    ea_l = props.young_modulus * props.area / length

    axial_force = ea_l * delta
    th = np.stack([th_k, th_l], axis=1)
    moments = np.einsum("nij,nj->ni", bend, th)

    energy = 0.5 * axial_force * delta + 0.5 * np.einsum("ni,ni->n", moments, th)

    # strain derivative rows
    z = np.stack([-e[:, 1], e[:, 0]], axis=1)
    b_delta = np.zeros((n, 6))
    b_delta[:, 0:2] = -e
    b_delta[:, 3:5] = e
    zl = z / ln[:, None]
    b_thk = np.zeros((n, 6))
    b_thk[:, 0:2] = zl
    b_thk[:, 2] = 1.0
    b_thk[:, 3:5] = -zl
    b_thl = b_thk.copy()
    b_thl[:, 2] = 0.0
    b_thl[:, 5] = 1.0

    grad = (axial_force[:, None] * b_delta
            + moments[:, 0:1] * b_thk + moments[:, 1:2] * b_thl)
    if not with_hessian:
        return energy, grad, None

    hess = ea_l[:, None, None] * np.einsum("ni,nj->nij", b_delta, b_delta)
    rows = np.stack([b_thk, b_thl], axis=1)
    hess += np.einsum("nai,nab,nbj->nij", rows, bend, rows)

    # geometric part: curvature of the elongation and of the chord rotation
    proj = (np.eye(2)[None] - np.einsum("ni,nj->nij", e, e)) / ln[:, None, None]
    sym = (np.einsum("ni,nj->nij", z, e) + np.einsum("ni,nj->nij", e, z))
    rot_curv = sym / (ln ** 2)[:, None, None]
    msum = moments[:, 0] + moments[:, 1]
    uu = axial_force[:, None, None] * proj + msum[:, None, None] * rot_curv
    for i, j, sign in ((0, 0, 1.0), (0, 3, -1.0), (3, 0, -1.0), (3, 3, 1.0)):
        hess[:, i:i + 2, j:j + 2] += sign * uu
    return energy, grad, hess


# ---------------------------------------------------------------------------
# spatial kernel (complex-step differentiated strain map)
# ---------------------------------------------------------------------------

def perpendicular_frame(axis: np.ndarray) -> np.ndarray:
    """Deterministic rest frames (n, 3, 3) with columns (t1, t2, t3), t1 the
    beam axis.  t2 is built from the global basis vector least aligned with
    the axis, so equal axes always get equal frames."""
    axis = np.asarray(axis, dtype=float)
    n = axis.shape[0]
    pick = np.argmin(np.abs(axis), axis=1)
    helper = np.zeros((n, 3))
    helper[np.arange(n), pick] = 1.0
    t3 = np.cross(axis, helper)
    t3 /= np.linalg.norm(t3, axis=1)[:, None]
    t2 = np.cross(t3, axis)
    return np.stack([axis, t2, t3], axis=2)


def _skew(v):
    n = v.shape[0]
    s = np.zeros((n, 3, 3), dtype=v.dtype)
    s[:, 0, 1] = -v[:, 2]
    s[:, 0, 2] = v[:, 1]
    s[:, 1, 0] = v[:, 2]
    s[:, 1, 2] = -v[:, 0]
    s[:, 2, 0] = -v[:, 1]
    s[:, 2, 1] = v[:, 0]
    return s


def _rotation_from_vector(v):
    """Rodrigues map, complex-safe.  Series branches switch on the real part
    of the squared angle so complex-step perturbations never change branch."""
    t2 = np.einsum("ni,ni->n", v, v)
    small = np.real(t2) < 1e-8
    t2_safe = np.where(small, 1.0, t2)
    theta = np.sqrt(t2_safe)
    a = np.where(small,
                 1.0 - t2 / 6.0 + t2 ** 2 / 120.0 - t2 ** 3 / 5040.0,
                 np.sin(theta) / theta)
    b = np.where(small,
                 0.5 - t2 / 24.0 + t2 ** 2 / 720.0 - t2 ** 3 / 40320.0,
                 (1.0 - np.cos(theta)) / t2_safe)
    k = _skew(v)
    eye = np.eye(3, dtype=v.dtype)[None]
    return eye + a[:, None, None] * k + b[:, None, None] * (k @ k)


def _rotation_to_vector(r):
    """Log map for rotations bounded away from half a turn, complex-safe.

    Uses w = axial(skew part) = sin(theta) * n and cos(theta) from the trace;
    theta/sin(theta) is evaluated by series near the identity."""
    w = 0.5 * np.stack([r[:, 2, 1] - r[:, 1, 2],
                        r[:, 0, 2] - r[:, 2, 0],
                        r[:, 1, 0] - r[:, 0, 1]], axis=1)
    cos_t = 0.5 * (np.einsum("nii->n", r) - 1.0)
    if np.any(np.real(cos_t) < 0.05):
        raise BeamKernelError("relative rotation too close to half a turn")
    s2 = np.einsum("ni,ni->n", w, w)
    small = np.real(s2) < 1e-8
    sin_t = np.sqrt(np.where(small, 1.0, s2))
    # theta / sin(theta); arcsin series in sin(theta) near the identity
    factor = np.where(small,
                      1.0 + s2 / 6.0 + 3.0 * s2 ** 2 / 40.0,
                      np.arctan(sin_t / cos_t) / sin_t)
    return factor[:, None] * w


def spatial_strains(frame: np.ndarray, length: np.ndarray,
                    dofs: np.ndarray) -> np.ndarray:
    """Corotational strain 6-tuple per beam, (n, 6), complex-safe.

    Components: elongation, twist, and the two end bending rotations per
    transverse axis, ``(delta, phi, th2_k, th2_l, th3_k, th3_l)``.  The
    corotated frame follows the current chord, with the residual spin split
    evenly between the two end rotations via the mid-rotation construction.
    """
    dtype = dofs.dtype
    u_k = dofs[:, 0:3]
    th_k = dofs[:, 3:6]
    u_l = dofs[:, 6:9]
    th_l = dofs[:, 9:12]

    t1 = frame[:, :, 0].astype(dtype)
    chord = length[:, None] * t1 + u_l - u_k
    ln2 = np.einsum("ni,ni->n", chord, chord)
    if np.any(np.real(ln2) < (1e-12 * length) ** 2):
        raise BeamKernelError("beam collapsed to zero length")
    ln = np.sqrt(ln2)
    e1 = chord / ln[:, None]

    r_k = _rotation_from_vector(th_k)
    r_l = _rotation_from_vector(th_l)
    rel = np.einsum("nji,njk->nik", r_k, r_l)
    r_mid = r_k @ _rotation_from_vector(0.5 * _rotation_to_vector(rel))

    q = np.einsum("nij,nj->ni", r_mid, frame[:, :, 1].astype(dtype))
    e3 = np.cross(e1, q)
    e3_n2 = np.einsum("ni,ni->n", e3, e3)
    if np.any(np.real(e3_n2) < 1e-20):
        raise BeamKernelError("corotated frame degenerate (chord parallel to q)")
    e3 = e3 / np.sqrt(e3_n2)[:, None]
    e2 = np.cross(e3, e1)
    r_cor = np.stack([e1, e2, e3], axis=2)

    local_k = _rotation_to_vector(
        np.einsum("nji,njk,nkl->nil", r_cor, r_k, frame.astype(dtype)))
    local_l = np.einsum("nji,njk,nkl->nil", r_cor, r_l, frame.astype(dtype))
    local_l = _rotation_to_vector(local_l)

    out = np.empty((dofs.shape[0], 6), dtype=dtype)
    out[:, 0] = ln - length
    out[:, 1] = local_l[:, 0] - local_k[:, 0]
    out[:, 2] = local_k[:, 1]
    out[:, 3] = local_l[:, 1]
    out[:, 4] = local_k[:, 2]
    out[:, 5] = local_l[:, 2]
    return out


def _spatial_stiffness(props: BeamProperties, length: np.ndarray) -> np.ndarray:
    """Local strain stiffness (n, 6, 6) matching ``spatial_strains`` order."""
    n = length.shape[0]
    c = np.zeros((n, 6, 6))
    c[:, 0, 0] = props.young_modulus * props.area / length
    c[:, 1, 1] = props.shear_modulus * props.torsion_constant / length
    c[:, 2:4, 2:4] = _bending_block(props, props.inertia_2, length)
    c[:, 4:6, 4:6] = _bending_block(props, props.inertia_3, length)
    return c


def spatial_energy(props: BeamProperties, frame: np.ndarray,
                   length: np.ndarray, dofs: np.ndarray) -> np.ndarray:
    """Stored energy per beam, (n,)."""
    s = spatial_strains(frame, length, dofs)
    c = _spatial_stiffness(props, length)
    return 0.5 * np.einsum("ni,nij,nj->n", s, c, s)


_CS_STEP = 1e-200


def spatial_strain_jacobian(frame: np.ndarray, length: np.ndarray,
                            dofs: np.ndarray):
    """Strains (n, 6) and their exact Jacobian (n, 6, 12) by complex step."""
    n = dofs.shape[0]
    strains = spatial_strains(frame, length, dofs)
    bumped = np.repeat(dofs[None].astype(complex), 12, axis=0)
    for i in range(12):
        bumped[i, :, i] += 1j * _CS_STEP
    frame_rep = np.broadcast_to(frame, (12,) + frame.shape).reshape(12 * n, 3, 3)
    length_rep = np.broadcast_to(length, (12, n)).reshape(12 * n)
    pert = spatial_strains(frame_rep, length_rep, bumped.reshape(12 * n, 12))
    jac = pert.imag.reshape(12, n, 6).transpose(1, 2, 0) / _CS_STEP
    return strains, jac


def spatial_gradient(props: BeamProperties, frame: np.ndarray,
                     length: np.ndarray, dofs: np.ndarray):
    """Energy (n,) and exact gradient (n, 12) of the batch."""
    s, jac = spatial_strain_jacobian(frame, length, dofs)
    c = _spatial_stiffness(props, length)
    forces = np.einsum("nij,nj->ni", c, s)
    energy = 0.5 * np.einsum("ni,ni->n", forces, s)
    grad = np.einsum("nsi,ns->ni", jac, forces)
    return energy, grad


def spatial_gradient_hessian(props: BeamProperties, frame: np.ndarray,
                             length: np.ndarray, dofs: np.ndarray,
                             exact: bool = False):
    """Energy, exact gradient and Hessian of the batch.

    The default Hessian is the Gauss-Newton form B^T C B plus the axial
    geometric curvature; it is exact at the rest state, symmetric everywhere
    and keeps Newton steps well-posed in the near-linear loading regimes the
    solvers operate in.  ``exact=True`` instead differentiates the exact
    gradient by central differences (symmetrized), which resolves the
    remaining rotation-curvature terms at finite-difference accuracy.
    """
    if exact:
        energy, grad = spatial_gradient(props, frame, length, dofs)
        hess = _spatial_hessian_fd(props, frame, length, dofs)
        return energy, grad, hess

    s, jac = spatial_strain_jacobian(frame, length, dofs)
    c = _spatial_stiffness(props, length)
    forces = np.einsum("nij,nj->ni", c, s)
    energy = 0.5 * np.einsum("ni,ni->n", forces, s)
    grad = np.einsum("nsi,ns->ni", jac, forces)
    hess = np.einsum("nai,nab,nbj->nij", jac, c, jac)

    # axial geometric stiffness: curvature of the elongation strain
    u_k = dofs[:, 0:3]
    u_l = dofs[:, 6:9]
    chord = length[:, None] * frame[:, :, 0] + u_l - u_k
    ln = np.linalg.norm(chord, axis=1)
    e1 = chord / ln[:, None]
    proj = (np.eye(3)[None] - np.einsum("ni,nj->nij", e1, e1)) / ln[:, None, None]
    axial_force = forces[:, 0]
    uu = axial_force[:, None, None] * proj
    for i, j, sign in ((0, 0, 1.0), (0, 6, -1.0), (6, 0, -1.0), (6, 6, 1.0)):
        hess[:, i:i + 3, j:j + 3] += sign * uu
    # K^T C K is symmetric analytically; enforce it against summation roundoff
    hess = 0.5 * (hess + hess.transpose(0, 2, 1))
    return energy, grad, hess


def _spatial_hessian_fd(props: BeamProperties, frame: np.ndarray,
                        length: np.ndarray, dofs: np.ndarray) -> np.ndarray:
    """Central differences of the exact gradient, symmetrized, (n, 12, 12)."""
    n = dofs.shape[0]
    hess = np.empty((n, 12, 12))
    # translation steps scale with the beam, rotation steps are absolute
    steps = np.empty((n, 12))
    steps[:, 0:3] = steps[:, 6:9] = 1e-7 * length[:, None]
    steps[:, 3:6] = steps[:, 9:12] = 1e-7
    for i in range(12):
        plus = dofs.copy()
        plus[:, i] += steps[:, i]
        minus = dofs.copy()
        minus[:, i] -= steps[:, i]
        _, g_p = spatial_gradient(props, frame, length, plus)
        _, g_m = spatial_gradient(props, frame, length, minus)
        hess[:, :, i] = (g_p - g_m) / (2.0 * steps[:, i:i + 1])
    return 0.5 * (hess + hess.transpose(0, 2, 1))


# ---------------------------------------------------------------------------
# stress recovery
# ---------------------------------------------------------------------------

@dataclass
class BeamStressState:
    """Per-beam stress recovery results, all arrays of shape (n,).

    ``tensile`` is the failure-driving measure: the largest magnitude over
    both ends of axial stress plus unsigned extreme-fiber bending stress.
    """

    axial: np.ndarray
    bending_k: np.ndarray
    bending_l: np.ndarray
    tensile: np.ndarray


def recover_stresses(props: BeamProperties, strains: np.ndarray,
                     length: np.ndarray) -> BeamStressState:
    """Extreme-fiber stress recovery from corotational strains.

    Accepts planar (n, 3) or spatial (n, 6) strain batches.  Bending moments
    come from the end-rotation stiffness; in 3D the two bending planes are
    combined as a vector resultant, which is exact for circular sections.
    """
    strains = np.asarray(strains)
    axial = props.young_modulus * strains[:, 0] / length
    if strains.shape[1] == 3:
        bend = _bending_block(props, props.inertia_3, length)
        moments = np.einsum("nij,nj->ni", bend, strains[:, 1:3])
        m_k = np.abs(moments[:, 0])
        m_l = np.abs(moments[:, 1])
        sigma_k = m_k * props.fiber_distance / props.inertia_3
        sigma_l = m_l * props.fiber_distance / props.inertia_3
    elif strains.shape[1] == 6:
        bend2 = _bending_block(props, props.inertia_2, length)
        bend3 = _bending_block(props, props.inertia_3, length)
        m2 = np.einsum("nij,nj->ni", bend2, strains[:, 2:4])
        m3 = np.einsum("nij,nj->ni", bend3, strains[:, 4:6])
        sigma_k = np.hypot(m2[:, 0] * props.fiber_distance / props.inertia_2,
                           m3[:, 0] * props.fiber_distance / props.inertia_3)
        sigma_l = np.hypot(m2[:, 1] * props.fiber_distance / props.inertia_2,
                           m3[:, 1] * props.fiber_distance / props.inertia_3)
    else:
        raise BeamKernelError(f"unexpected strain arity {strains.shape[1]}")
    tensile = np.maximum(np.abs(axial + sigma_k), np.abs(axial + sigma_l))
    return BeamStressState(axial=axial, bending_k=sigma_k, bending_l=sigma_l,
                           tensile=tensile)
