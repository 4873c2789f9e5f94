"""The infinitely-heavy two-state linear curve-crossing model.

The Hamiltonian has no kinetic term, so the exact coherent-state kernel
is a single position integral of the entrance/exit Gaussians against the
spin matrix element Z(x), and the semiclassical kernel follows from the
complex saddle points of the explicit exponent

    Phi(x) = S(x) + (i/2)(x-q')^2 + (i/2)(x-q'')^2 + p'(x-q'/2) - p''(x-q''/2)

with S = -i hbar ln Z.  The stationarity condition Phi'(x) = 0 is
algebraically the one-step Hamilton equation with Klauder's boundary
conditions, which is exercised as a tested invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import (
    CoherentLabel, ComplexPoint, ROOT2, SaddleBranch, TrajectoryMap,
    branch_log, initial_point, solve_boundary,
)
from .errors import ZeroOfInfluenceFunctional
from .gridfield import Axis, GridField
from .quadrature import adaptive_gk, adaptive_gk_batch
from .twolevel import (
    HeavyParams, SpinState, Window, Z_TINY, _heavy_z_derivs, find_z_zeros,
)

QUAD_HALFWIDTH_IN_SQRT_HBAR = 8.0
EPS_AMP = 1e-6

# q-plane search window for zeros of Z used by caustic classification
ZERO_SEARCH = Window(-8.0, 8.0, -8.0, 8.0)


class HeavyMap(TrajectoryMap):
    """One effective kick at fixed position: q'' = q', p'' = p' + S'(q')."""

    def __init__(self, entrance: CoherentLabel, spin_in: SpinState,
                 spin_out: SpinState, params: HeavyParams):
        self.entrance = entrance
        self.spin_in = spin_in
        self.spin_out = spin_out
        self.params = params
        self.hbar = params.hbar
        self._P = entrance.entrance_P()
        self._zeros: list[complex] | None = None

    def qbar(self, z):
        return (np.asarray(z, dtype=complex) + 1j * self._P) / ROOT2

    def _z_derivs(self, q, order=2):
        return _heavy_z_derivs(q, self.spin_in, self.spin_out, self.params,
                               order=order)

    def exit_Q(self, z):
        q = self.qbar(z)
        Z, Z1 = self._z_derivs(q, order=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.asarray(z, dtype=complex) - (self.hbar / ROOT2) * Z1 / Z

    def exit_and_tangent(self, z):
        q = self.qbar(z)
        Z, Z1, Z2 = self._z_derivs(q)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = Z1 / Z
            w = np.asarray(z, dtype=complex) - (self.hbar / ROOT2) * r
            jac = 1.0 - 0.5 * self.hbar * (Z2 / Z - r * r)
        return w, jac

    def exit_point(self, z) -> ComplexPoint:
        """Full final phase-space point of the one-step trajectory."""
        pt = initial_point(complex(z), self.entrance)
        q = np.asarray(pt.q, dtype=complex)
        Z, Z1 = self._z_derivs(q, order=1)
        dS = -1j * self.hbar * Z1 / Z
        return ComplexPoint(pt.q, pt.p + complex(dS))

    def action_fixed_exit(self, z, exit_label: CoherentLabel, ln_ref=None):
        q = self.qbar(z)
        (Z,) = self._z_derivs(q, order=0)
        if np.any(np.abs(Z) < Z_TINY):
            raise ZeroOfInfluenceFunctional(complex(np.atleast_1d(q)[0]))
        ln = branch_log(Z, None if ln_ref is None else ln_ref[0])
        S = -1j * self.hbar * ln
        e = self.entrance
        x = exit_label
        F = (S + 0.5j * (q - e.q) ** 2 + 0.5j * (q - x.q) ** 2
             + e.p * (q - 0.5 * e.q) - x.p * (q - 0.5 * x.q))
        return F, [ln]

    def action_self_exit_vec(self, z, ln_ref=None):
        z = np.asarray(z, dtype=complex)
        q = self.qbar(z)
        Z, Z1 = self._z_derivs(q, order=1)
        if np.any(np.abs(Z) < Z_TINY):
            raise ZeroOfInfluenceFunctional(complex(np.atleast_1d(q).ravel()[0]))
        ln = branch_log(Z, None if ln_ref is None else ln_ref[0])
        S = -1j * self.hbar * ln
        with np.errstate(divide="ignore", invalid="ignore"):
            w = z - (self.hbar / ROOT2) * Z1 / Z
        qx = ROOT2 * w.real
        px = -ROOT2 * w.imag
        e = self.entrance
        F = (S + 0.5j * (q - e.q) ** 2 + 0.5j * (q - qx) ** 2
             + e.p * (q - 0.5 * e.q) - px * (q - 0.5 * qx))
        return F, [ln]

    def phi_second(self, z):
        """Phi''(qbar): the exponent curvature at the mapped position."""
        q = self.qbar(z)
        Z, Z1, Z2 = self._z_derivs(q)
        r = Z1 / Z
        d2S = -1j * self.hbar * (Z2 / Z - r * r)
        return d2S + 2j

    def trajectory_qpoints(self, z):
        return self.qbar(z)[None, ...]

    def z_zero_positions(self) -> list[complex]:
        if self._zeros is None:
            self._zeros = find_z_zeros(ZERO_SEARCH, self.params,
                                       self.spin_in, self.spin_out)
        return self._zeros

    def singular_preimages(self) -> list[complex]:
        """Q' values whose trajectory sits exactly on a zero of Z."""
        return [ROOT2 * q0 - 1j * self._P for q0 in self.z_zero_positions()]


def _integrand(entrance, exit_label, spin_in, spin_out, params, convention):
    hbar = params.hbar
    qp, pp = entrance.q, entrance.p
    qx, px = exit_label.q, exit_label.p

    def f(x):
        (Z,) = _heavy_z_derivs(x, spin_in, spin_out, params, order=0)
        if convention == "half":
            phase = pp * (x - 0.5 * qp) - px * (x - 0.5 * qx)
        elif convention == "full":
            phase = pp * (x - qp) - px * (x - qx)
        else:
            raise ValueError(f"unknown phase convention {convention!r}")
        g = (-(x - qp) ** 2 - (x - qx) ** 2) / (2 * hbar)
        return Z * np.exp(g + 1j * phase / hbar) / np.sqrt(np.pi * hbar)

    lo = min(qp, qx) - QUAD_HALFWIDTH_IN_SQRT_HBAR * np.sqrt(hbar)
    hi = max(qp, qx) + QUAD_HALFWIDTH_IN_SQRT_HBAR * np.sqrt(hbar)
    return f, lo, hi


def exact_kernel(entrance: CoherentLabel, exit_label: CoherentLabel,
                 spin_in: SpinState, spin_out: SpinState, params: HeavyParams,
                 *, tol: float = 1e-10, convention: str = "half") -> complex:
    """Quadrature-exact coherent-state kernel K^t(exit, spin_out; entrance, spin_in)."""
    f, lo, hi = _integrand(entrance, exit_label, spin_in, spin_out, params,
                           convention)
    return adaptive_gk(f, lo, hi, tol=tol)


def semiclassical_kernel(entrance: CoherentLabel, exit_label: CoherentLabel,
                         spin_in: SpinState, spin_out: SpinState,
                         params: HeavyParams, *, eps_amp: float = EPS_AMP,
                         stokes=None, seeds=None,
                         pmap: HeavyMap | None = None,
                         ) -> tuple[complex, list[SaddleBranch]]:
    """Stationary-phase kernel: sum of E exp(iF/hbar) over filtered saddles.

    Branches whose Im F exceeds hbar*ln(1/eps_amp) are dropped outright;
    the remaining ones pass through Stokes filtering when a StokesAnalysis
    for this map is supplied.  Returns the filtered sum and the annotated
    branch list (excluded branches carry physical=False).
    """
    if pmap is None:
        pmap = HeavyMap(entrance, spin_in, spin_out, params)
    branches = solve_boundary(pmap, exit_label, seeds=seeds)
    im_cut = params.hbar * np.log(1.0 / eps_amp)
    branches = [b if b.F.imag <= im_cut else b.marked(physical=False)
                for b in branches]
    if stokes is not None:
        kept = [b for b in branches if b.flags.physical]
        kept = stokes.filter_branches(kept)
        branches = kept + [b for b in branches if not b.flags.physical]
    total = sum((b.weight(params.hbar) for b in branches if b.flags.physical),
                start=0j)
    return total, branches


@dataclass(frozen=True)
class HusimiResult:
    exact: GridField
    semiclassical: GridField
    branch_counts: np.ndarray
    kept_counts: np.ndarray


def husimi_grid(entrance: CoherentLabel, spin_in: SpinState,
                spin_out: SpinState, params: HeavyParams,
                q_range: tuple[float, float], p_range: tuple[float, float],
                resolution: int | tuple[int, int], *, tol: float = 1e-10,
                stokes="auto", eps_amp: float = EPS_AMP) -> HusimiResult:
    """|K|^2 over an exit-label window, exact and semiclassical.

    stokes="auto" builds the Stokes geometry of the map once and applies
    branch filtering at every exit point; pass None to skip filtering.
    """
    nq, np_ = (resolution, resolution) if isinstance(resolution, int) else resolution
    if min(nq, np_) < 16:
        raise ValueError("resolution must be at least 16 per axis")
    qs = np.linspace(q_range[0], q_range[1], nq)
    ps = np.linspace(p_range[0], p_range[1], np_)

    pmap = HeavyMap(entrance, spin_in, spin_out, params)
    if stokes == "auto":
        from .stokes import StokesAnalysis
        stokes = StokesAnalysis.for_map(pmap)

    from .parallel import thread_map

    exact_rows = thread_map(
        lambda qx: _exact_row(entrance, qx, ps, spin_in, spin_out, params, tol),
        qs)
    exact_vals = np.asarray(exact_rows)

    def sc_row(qx):
        vals = np.empty(np_)
        found = np.zeros(np_, dtype=int)
        kept = np.zeros(np_, dtype=int)
        for j, px in enumerate(ps):
            K, branches = semiclassical_kernel(
                entrance, CoherentLabel(qx, px), spin_in, spin_out, params,
                eps_amp=eps_amp, stokes=stokes, pmap=pmap)
            vals[j] = abs(K) ** 2
            found[j] = len(branches)
            kept[j] = sum(b.flags.physical for b in branches)
        return vals, found, kept

    rows = thread_map(sc_row, qs)
    sc_vals = np.asarray([r[0] for r in rows])
    bcount = np.asarray([r[1] for r in rows])
    kcount = np.asarray([r[2] for r in rows])

    axes = (Axis("q_exit", qs[0], qs[-1], nq), Axis("p_exit", ps[0], ps[-1], np_))
    meta = {
        "entrance_q": repr(entrance.q), "entrance_p": repr(entrance.p),
        "hbar": repr(params.hbar), "F": repr(params.F), "J": repr(params.J),
        "t": repr(params.t),
    }
    exact_field = GridField(axes, exact_vals, {**meta, "provenance": "exact"})
    sc_field = GridField(axes, sc_vals, {**meta, "provenance": "semiclassical"})
    return HusimiResult(exact_field, sc_field, bcount, kcount)


def _exact_row(entrance, qx, ps, spin_in, spin_out, params, tol):
    """One row of quadrature-exact |K|^2, batched over the p axis."""
    hbar = params.hbar
    qp, pp = entrance.q, entrance.p

    def f(x):
        (Z,) = _heavy_z_derivs(x, spin_in, spin_out, params, order=0)
        g = (-(x - qp) ** 2 - (x - qx) ** 2) / (2 * hbar)
        base = Z * np.exp(g + 1j * pp * (x - 0.5 * qp) / hbar)
        osc = np.exp(-1j * ps[:, None] * (x[None, :] - 0.5 * qx) / hbar)
        return base[None, :] * osc / np.sqrt(np.pi * hbar)

    lo = min(qp, qx) - QUAD_HALFWIDTH_IN_SQRT_HBAR * np.sqrt(hbar)
    hi = max(qp, qx) + QUAD_HALFWIDTH_IN_SQRT_HBAR * np.sqrt(hbar)
    vals = adaptive_gk_batch(f, lo, hi, tol=tol)
    return np.abs(vals) ** 2


def imf_landscape(entrance: CoherentLabel, exit_label: CoherentLabel,
                  spin_in: SpinState, spin_out: SpinState, params: HeavyParams,
                  window: Window, resolution: int) -> tuple[GridField, dict]:
    """Complex action F over the Q'-plane with row-continuous log branches.

    Grid cells whose trajectory sits on a zero of Z hold inf+inf j.  The
    markers dict reports the Q'-plane pre-images of the zeros of Z and the
    caustic points with their Im F values (the close pair flanking each
    zero: the member with the smaller Im F matters, the other is beyond
    the amplitude cutoff).
    """
    pmap = HeavyMap(entrance, spin_in, spin_out, params)
    res = np.linspace(window.re_min, window.re_max, resolution)
    ims = np.linspace(window.im_min, window.im_max, resolution)
    vals = np.empty((resolution, resolution), dtype=complex)

    # anchor the branch at the grid corner via a straight continuation path
    corner = complex(res[0], ims[0])
    ref = _continued_ref(pmap, exit_label, pmap.anchor, corner)
    col_ref = ref
    for i, re in enumerate(res):
        start = complex(re, ims[0])
        F0, col_ref = _safe_action(pmap, exit_label, start, col_ref)
        vals[i, 0] = F0
        row_ref = col_ref
        for j in range(1, resolution):
            z = complex(re, ims[j])
            vals[i, j], row_ref = _safe_action(pmap, exit_label, z, row_ref)

    from .stokes import find_caustics
    caustics = find_caustics(pmap, window)
    markers = {
        "z_zero_preimages": [w for w in pmap.singular_preimages()
                             if window.contains(w)],
        "caustics": [(c.Qprime, c.kind,
                      float(pmap.action_self_exit(c.Qprime)[0].imag))
                     for c in caustics],
    }
    axes = (Axis("Re_Qprime", res[0], res[-1], resolution),
            Axis("Im_Qprime", ims[0], ims[-1], resolution))
    meta = {
        "entrance_q": repr(entrance.q), "entrance_p": repr(entrance.p),
        "exit_q": repr(exit_label.q), "exit_p": repr(exit_label.p),
        "hbar": repr(params.hbar), "F": repr(params.F), "J": repr(params.J),
        "t": repr(params.t), "provenance": "semiclassical",
    }
    return GridField(axes, vals, meta), markers


def _safe_action(pmap, exit_label, z, ref):
    from .errors import ZeroOfInfluenceFunctional
    try:
        F, ref_new = pmap.action_fixed_exit(z, exit_label, ln_ref=ref)
        return complex(F), ref_new
    except ZeroOfInfluenceFunctional:
        return complex(np.inf, np.inf), ref


def _continued_ref(pmap, exit_label, start, stop, samples=64):
    ref = None
    for z in np.linspace(start, stop, samples):
        try:
            _, ref = pmap.action_fixed_exit(complex(z), exit_label, ln_ref=ref)
        except Exception:
            pass
    return ref
