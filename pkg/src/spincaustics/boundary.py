"""Complexified trajectories under coherent-state boundary conditions.

The canonical pair (Q, P) = ((q - i p)/sqrt(2), (p - i q)/sqrt(2)) turns
the two-sided coherent-state boundary condition into one fixed entrance
value P' and one complex shooting equation Q''(Q') = (q'' - i p'')/sqrt(2).
This module provides the variable changes, a damped vectorized Newton
solver over the Q'-plane, square-root branch transport for the
semiclassical amplitude E = (dQ''/dQ')^(-1/2), and tangent-map checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoRoots

ROOT2 = np.sqrt(2.0)

# Newton defaults for boundary-value roots
ROOT_TOL = 1e-11
ROOT_DEDUP = 1e-7
SEEDS_PER_AXIS = 24
SEED_HALFWIDTH_IN_SQRT_HBAR = 4.0
MAX_NEWTON_ITER = 60
MAX_HALVINGS = 8

CAUSTIC_PROXIMITY = 1e-8


@dataclass(frozen=True)
class CoherentLabel:
    """Real phase-space label (q, p) of a coherent state."""

    q: float
    p: float

    def entrance_P(self) -> complex:
        """Fixed initial value P' = (p - i q)/sqrt(2)."""
        return complex(self.p, -self.q) / ROOT2

    def exit_target(self) -> complex:
        """Required final value Q'' = (q - i p)/sqrt(2)."""
        return complex(self.q, -self.p) / ROOT2

    def anchor_Q(self) -> complex:
        """Q' of the real-trajectory anchor, (q - i p)/sqrt(2)."""
        return complex(self.q, -self.p) / ROOT2


@dataclass(frozen=True)
class ComplexPoint:
    """A complexified phase-space point (q, p)."""

    q: complex
    p: complex


@dataclass(frozen=True)
class KlauderVars:
    Q: complex
    P: complex


def to_klauder(pt: ComplexPoint) -> KlauderVars:
    return KlauderVars((pt.q - 1j * pt.p) / ROOT2, (pt.p - 1j * pt.q) / ROOT2)


def from_klauder(kv: KlauderVars) -> ComplexPoint:
    return ComplexPoint((kv.Q + 1j * kv.P) / ROOT2, (kv.P + 1j * kv.Q) / ROOT2)


def initial_point(Qprime: complex, entrance: CoherentLabel) -> ComplexPoint:
    """Initial trajectory point for a given Q' and entrance label."""
    return from_klauder(KlauderVars(Qprime, entrance.entrance_P()))


def label_from_exit_Q(w: complex) -> CoherentLabel:
    """The unique real exit label whose target value is w."""
    return CoherentLabel(ROOT2 * w.real, -ROOT2 * w.imag)


def coherent_overlap(exit_label: CoherentLabel, entrance: CoherentLabel,
                     hbar: float) -> complex:
    """<q''p''|q'p'> in the symmetric phase convention."""
    dq = exit_label.q - entrance.q
    dp = exit_label.p - entrance.p
    phase = (entrance.p * exit_label.q - exit_label.p * entrance.q) / (2 * hbar)
    return np.exp(-(dq * dq + dp * dp) / (4 * hbar) + 1j * phase)


@dataclass(frozen=True)
class BranchFlags:
    physical: bool = True
    near_v_psc: bool = False
    caustic_proximity: bool = False


@dataclass(frozen=True)
class SaddleBranch:
    """One stationary-phase contribution E exp(i F / hbar).

    Qprime is the initial parameter of the contributing trajectory, F its
    complex action including boundary terms, jac = dQ''/dQ' and
    E = jac^(-1/2) with the branch fixed by continuity from the anchor.
    """

    Qprime: complex
    F: complex
    E: complex
    jac: complex
    flags: BranchFlags = field(default_factory=BranchFlags)
    residual: float = 0.0

    def weight(self, hbar: float) -> complex:
        return self.E * np.exp(1j * self.F / hbar)

    def marked(self, **kw) -> "SaddleBranch":
        return replace(self, flags=replace(self.flags, **kw))


class TrajectoryMap:
    """Interface shared by the boundary solver, landscapes and Stokes tracing.

    A map is bound to one entrance label and one spin assignment; the only
    free parameter is the initial value Q'.  All array-in/array-out.
    """

    hbar: float
    entrance: CoherentLabel

    @property
    def anchor(self) -> complex:
        return self.entrance.anchor_Q()

    def exit_Q(self, z):
        raise NotImplementedError

    def exit_and_tangent(self, z):
        """(Q''(z), dQ''/dQ'(z))"""
        raise NotImplementedError

    def action_fixed_exit(self, z, exit_label: CoherentLabel, ln_ref=None):
        """Action F(z) with boundary terms for a fixed exit label.

        Returns (F, ln_values) where ln_values are the logarithms of the
        per-step influence values actually used, so a caller tracing a
        path can pass them back as ln_ref to keep the branch continuous.
        """
        raise NotImplementedError

    def action_self_exit(self, z, ln_ref=None):
        """Action with the exit label read off the trajectory's own image."""
        w = complex(np.asarray(self.exit_Q(z), dtype=complex))
        return self.action_fixed_exit(z, label_from_exit_Q(w), ln_ref=ln_ref)

    def action_self_exit_vec(self, z, ln_ref=None):
        """Vectorized action_self_exit over an array of Q' values.

        Default falls back to a scalar loop; maps override with a fully
        batched implementation for the Stokes tracer.
        """
        z = np.asarray(z, dtype=complex)
        F = np.empty(z.shape, dtype=complex)
        refs = None
        flat = z.ravel()
        out_refs = []
        for i, zi in enumerate(flat):
            ref_i = None if ln_ref is None else [r.ravel()[i] for r in ln_ref]
            Fi, lns = self.action_self_exit(complex(zi), ln_ref=ref_i)
            F.ravel()[i] = Fi
            out_refs.append(lns)
        if out_refs and out_refs[0]:
            refs = [np.asarray([r[k] for r in out_refs]).reshape(z.shape)
                    for k in range(len(out_refs[0]))]
        else:
            refs = []
        return F, refs

    def trajectory_qpoints(self, z):
        """Positions fed to the influence functions, shape (steps, ...)."""
        raise NotImplementedError

    def z_zero_positions(self) -> list[complex]:
        """q-plane zeros of the influence functions relevant to this map."""
        return []

    def min_zero_distance(self, z) -> np.ndarray:
        """Distance of the trajectory from the nearest influence zero."""
        zeros = self.z_zero_positions()
        pts = np.asarray(self.trajectory_qpoints(z), dtype=complex)
        if not zeros:
            return np.full(pts.shape[1:] if pts.ndim > 1 else (), np.inf)
        d = np.min([np.abs(pts - q0) for q0 in zeros], axis=0)
        return np.min(d, axis=0) if d.ndim else d


def branch_log(Z, ref=None):
    """Principal log, shifted by 2 pi i to land nearest a reference log."""
    L = np.log(Z)
    if ref is None:
        return L
    k = np.round((np.asarray(ref).imag - np.asarray(L).imag) / (2 * np.pi))
    return L + 2j * np.pi * k


def default_seed_grid(center: complex, hbar: float,
                      per_axis: int = SEEDS_PER_AXIS,
                      halfwidth: float | None = None) -> np.ndarray:
    """Uniform Q'-plane seed grid around the anchor, a few sqrt(hbar) wide."""
    if halfwidth is None:
        halfwidth = SEED_HALFWIDTH_IN_SQRT_HBAR * np.sqrt(hbar)
    re = np.linspace(center.real - halfwidth, center.real + halfwidth, per_axis)
    im = np.linspace(center.imag - halfwidth, center.imag + halfwidth, per_axis)
    return (re[:, None] + 1j * im[None, :]).ravel()


def newton_roots(residual_and_jac, seeds, *, tol=ROOT_TOL,
                 max_iter=MAX_NEWTON_ITER, dedup=ROOT_DEDUP,
                 max_step=None) -> np.ndarray:
    """Damped Newton iteration on a batch of complex seeds.

    residual_and_jac(z) -> (R, dR/dz), elementwise over an array.  Steps
    that fail to reduce |R| are halved up to MAX_HALVINGS times (stiff
    basins near logarithmic singularities).  Returns deduplicated
    converged roots sorted by (Re, Im).
    """
    z = np.asarray(seeds, dtype=complex).ravel().copy()
    R, dR = residual_and_jac(z)
    absR = np.abs(R)
    for _ in range(max_iter):
        active = (absR > tol) & np.isfinite(z) & np.isfinite(absR)
        if not np.any(active):
            break
        za = z[active]
        Ra = R[active]
        dRa = dR[active]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(np.abs(dRa) > 0, Ra / dRa, np.nan)
        if max_step is not None:
            big = np.abs(step) > max_step
            step[big] = step[big] / np.abs(step[big]) * max_step
        z_new = za - step
        R_new, dR_new = residual_and_jac(z_new)
        absR_new = np.abs(R_new)
        worse = ~(absR_new < np.abs(Ra)) & np.isfinite(absR_new)
        halvings = 0
        while np.any(worse) and halvings < MAX_HALVINGS:
            step = np.where(worse, 0.5 * step, step)
            z_try = za - step
            R_try, dR_try = residual_and_jac(z_try)
            z_new = np.where(worse, z_try, z_new)
            R_new = np.where(worse, R_try, R_new)
            dR_new = np.where(worse, dR_try, dR_new)
            absR_new = np.abs(R_new)
            worse = worse & ~(absR_new < np.abs(Ra)) & np.isfinite(absR_new)
            halvings += 1
        z[active] = z_new
        R[active] = R_new
        dR[active] = dR_new
        absR[active] = absR_new
    good = np.isfinite(z) & (absR < tol)
    roots = z[good]
    if roots.size == 0:
        return np.empty(0, dtype=complex)
    order = np.lexsort((roots.imag, roots.real))
    roots = roots[order]
    keep: list[complex] = []
    for r in roots:
        if all(abs(r - u) > dedup for u in keep):
            keep.append(complex(r))
    return np.asarray(keep, dtype=complex)


def transported_sqrt(values: np.ndarray) -> complex:
    """Square root of values[-1], branch-continued along the sampled path.

    Starts from the principal branch at values[0]; at every sample the
    sign of the principal root is flipped whenever that keeps the root
    continuous, which tracks the phase through half-turns of the value.
    """
    s = np.sqrt(values[0])
    for v in values[1:]:
        c = np.sqrt(v)
        if abs(c - s) > abs(-c - s):
            c = -c
        s = c
    return complex(s)


def amplitude_with_branch(pmap: TrajectoryMap, root: complex,
                          *, max_refine: int = 12) -> tuple[complex, complex]:
    """E = jac^(-1/2) at a root, branch transported from the anchor.

    The straight anchor-to-root path is refined until consecutive jac
    samples turn by less than pi/2, so the half-turn count is unambiguous.
    Returns (E, jac_at_root).
    """
    a = pmap.anchor
    n = 8
    for _ in range(max_refine):
        ts = np.linspace(0.0, 1.0, n + 1)
        path = a + (root - a) * ts
        _, jac = pmap.exit_and_tangent(path)
        jac = np.asarray(jac, dtype=complex)
        if np.any(~np.isfinite(jac)) or np.any(np.abs(jac) == 0.0):
            n *= 2
            continue
        turns = np.abs(np.angle(jac[1:] / jac[:-1]))
        if np.max(turns) < 0.5 * np.pi:
            s = transported_sqrt(jac)
            return 1.0 / s, complex(jac[-1])
        n *= 2
    s = transported_sqrt(jac)
    return 1.0 / s, complex(jac[-1])


def solve_boundary(pmap: TrajectoryMap, exit_label: CoherentLabel,
                   seeds=None, *, v_psc_radius: float | None = None,
                   tol: float = ROOT_TOL) -> list[SaddleBranch]:
    """All boundary-value roots Q''(Q') = target, packaged as branches.

    Raises NoRoots when no seed converges.  The square-root branch of
    each amplitude is assigned by continuity along a straight path from
    the real-trajectory anchor.
    """
    if seeds is None:
        seeds = default_seed_grid(pmap.anchor, pmap.hbar)
    target = exit_label.exit_target()

    def res(z):
        w, dw = pmap.exit_and_tangent(z)
        return w - target, dw

    roots = newton_roots(res, seeds, tol=tol)
    if roots.size == 0:
        raise NoRoots(f"no boundary root for exit {exit_label}")
    if v_psc_radius is None:
        v_psc_radius = np.sqrt(pmap.hbar)
    zero_dist = pmap.min_zero_distance(roots)
    branches = []
    for i, r in enumerate(roots):
        E, jac = amplitude_with_branch(pmap, complex(r))
        F, _ = pmap.action_fixed_exit(complex(r), exit_label)
        w, _ = pmap.exit_and_tangent(np.asarray([r]))
        resid = abs(complex(w[0]) - target)
        flags = BranchFlags(
            physical=True,
            near_v_psc=bool(np.asarray(zero_dist).ravel()[i] < v_psc_radius),
            caustic_proximity=bool(abs(jac) < CAUSTIC_PROXIMITY),
        )
        branches.append(SaddleBranch(Qprime=complex(r), F=complex(F), E=E,
                                     jac=jac, flags=flags, residual=resid))
    return branches


def tangent_map_check(pmap: TrajectoryMap, Qprime: complex,
                      *, step: float | None = None) -> float:
    """Relative error of the analytic tangent map against central differences."""
    if step is None:
        step = 1e-6 * (1.0 + abs(Qprime))
    _, jac = pmap.exit_and_tangent(np.asarray([Qprime]))
    wp = pmap.exit_Q(np.asarray([Qprime + step]))
    wm = pmap.exit_Q(np.asarray([Qprime - step]))
    fd = (complex(wp[0]) - complex(wm[0])) / (2 * step)
    denom = max(abs(fd), 1e-30)
    return abs(complex(jac[0]) - fd) / denom
