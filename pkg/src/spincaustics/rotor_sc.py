"""Semiclassical evaluation of the decomposed rotor kernels.

The effective complexified standard map

    p_n = p_{n-1} - dV_n(q_{n-1}),   q_n = q_{n-1} + p_n

with V_n = i hbar ln Z_n is iterated from the entrance boundary data; the
discrete action

    F = sum_n [ p_n^2/2 - V_n(q_{n-1}) ]
        + (i/2)(q_0 - q')^2 + p'(q_0 - q'/2)
        + (i/2)(q_N - q'')^2 - p''(q_N - q''/2)

is the stationary exponent of the position-representation path integral:
its stationarity conditions reproduce the map together with Klauder's
boundary conditions, which fixes the normalization E = (dQ''/dQ')^(-1/2)
through the N = 0 identity.  The physical domain D is the sublevel set
of Im F over the Q'-plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import (
    CoherentLabel, ComplexPoint, ROOT2, SaddleBranch, TrajectoryMap,
    branch_log, solve_boundary,
)
from .errors import ZeroOfInfluenceFunctional
from .twolevel import (
    KickParams, SpinState, Window, Z_TINY, _kick_z_derivs, find_z_zeros,
)

EPS_AMP = 1e-6
IMF_CUTOFF_DEFAULT = 1.151
DOMAIN_HALFWIDTH_IN_SQRT_HBAR = 3.0

# one-period search window for the zeros of the kick influence function
_ZERO_WINDOW = Window(0.0, 2 * np.pi, -3.0, 3.0)


class RotorMap(TrajectoryMap):
    """N-step effective map of the spin-kicked rotor for one spin sequence."""

    def __init__(self, entrance: CoherentLabel, spin_sequence: list[SpinState],
                 params: KickParams):
        if len(spin_sequence) != params.N + 1:
            raise ValueError(
                f"spin_sequence needs {params.N + 1} entries, got {len(spin_sequence)}")
        self.entrance = entrance
        self.spin_sequence = list(spin_sequence)
        self.params = params
        self.hbar = params.hbar
        self._P = entrance.entrance_P()
        self._zero_cache: dict[int, list[complex]] = {}

    def _step_zeros(self, n: int) -> list[complex]:
        """Zeros of Z_n in one period strip (they repeat mod 2 pi)."""
        if n not in self._zero_cache:
            self._zero_cache[n] = find_z_zeros(
                _ZERO_WINDOW, self.params,
                self.spin_sequence[n - 1], self.spin_sequence[n])
        return self._zero_cache[n]

    def run(self, z, *, order: int = 2):
        """Iterate the map from Q' values; all arrays broadcast over z.

        Returns dict with positions q (N+1, ...), momenta p (N+1, ...)
        with p[0] the initial momentum, per-step influence values Z
        (N, ...), and, for order >= 2, the tangent pair (dq, dp).
        """
        z = np.asarray(z, dtype=complex)
        p = self.params
        q_n = (z + 1j * self._P) / ROOT2
        p_n = (self._P + 1j * z) / ROOT2
        dq = np.full_like(q_n, 1.0 / ROOT2)
        dp = np.full_like(q_n, 1j / ROOT2)
        qs = [q_n]
        ps = [p_n]
        dqs = [dq]
        dps = [dp]
        Zs = []
        with np.errstate(divide="ignore", invalid="ignore"):
            for n in range(1, p.N + 1):
                Z, Z1, Z2 = _kick_z_derivs(q_n, self.spin_sequence[n - 1],
                                           self.spin_sequence[n], p)
                r = Z1 / Z
                dV = 1j * p.hbar * r
                d2V = 1j * p.hbar * (Z2 / Z - r * r)
                p_n = p_n - dV
                q_n = q_n + p_n
                dp = dp - d2V * dq
                dq = dq + dp
                qs.append(q_n)
                ps.append(p_n)
                dqs.append(dq)
                dps.append(dp)
                Zs.append(Z)
        return {
            "q": np.stack(qs), "p": np.stack(ps),
            "Z": np.stack(Zs) if Zs else np.empty((0,) + z.shape, dtype=complex),
            "dq": dq, "dp": dp,
            "dqs": np.stack(dqs), "dps": np.stack(dps),
        }

    def exit_Q(self, z):
        out = self.run(z, order=1)
        return (out["q"][-1] - 1j * out["p"][-1]) / ROOT2

    def exit_and_tangent(self, z):
        out = self.run(z)
        w = (out["q"][-1] - 1j * out["p"][-1]) / ROOT2
        jac = (out["dq"] - 1j * out["dp"]) / ROOT2
        return w, jac

    def action_fixed_exit(self, z, exit_label: CoherentLabel, ln_ref=None):
        out = self.run(np.asarray(z, dtype=complex), order=1)
        Z = out["Z"]
        if Z.size and np.any(np.abs(Z) < Z_TINY):
            raise ZeroOfInfluenceFunctional(complex(np.atleast_1d(out["q"][0]).ravel()[0]))
        lns = []
        F = np.zeros_like(out["q"][0])
        for n in range(self.params.N):
            ref = None if ln_ref is None else ln_ref[n]
            ln = branch_log(Z[n], ref)
            lns.append(ln)
            F = F + 0.5 * out["p"][n + 1] ** 2 - 1j * self.hbar * ln
        e, x = self.entrance, exit_label
        q0, qN = out["q"][0], out["q"][-1]
        F = (F + 0.5j * (q0 - e.q) ** 2 + e.p * (q0 - 0.5 * e.q)
             + 0.5j * (qN - x.q) ** 2 - x.p * (qN - 0.5 * x.q))
        return F, lns

    def action_self_exit_vec(self, z, ln_ref=None):
        z = np.asarray(z, dtype=complex)
        out = self.run(z, order=1)
        Z = out["Z"]
        if Z.size and np.any(np.abs(Z) < Z_TINY):
            raise ZeroOfInfluenceFunctional(complex(np.atleast_1d(out["q"][0]).ravel()[0]))
        lns = []
        F = np.zeros_like(out["q"][0])
        for n in range(self.params.N):
            ref = None if ln_ref is None else ln_ref[n]
            ln = branch_log(Z[n], ref)
            lns.append(ln)
            F = F + 0.5 * out["p"][n + 1] ** 2 - 1j * self.hbar * ln
        q0, qN, pN = out["q"][0], out["q"][-1], out["p"][-1]
        w = (qN - 1j * pN) / ROOT2
        qx = ROOT2 * w.real
        px = -ROOT2 * w.imag
        e = self.entrance
        F = (F + 0.5j * (q0 - e.q) ** 2 + e.p * (q0 - 0.5 * e.q)
             + 0.5j * (qN - qx) ** 2 - px * (qN - 0.5 * qx))
        return F, lns

    def trajectory_qpoints(self, z):
        out = self.run(np.asarray(z, dtype=complex), order=1)
        return out["q"][:-1] if self.params.N else out["q"][:0]

    def z_zero_positions(self) -> list[complex]:
        zeros = []
        for n in range(1, self.params.N + 1):
            zeros.extend(self._step_zeros(n))
        return zeros

    def min_zero_distance(self, z):
        """Distance of the feeding positions to the zero set, mod 2 pi."""
        z = np.asarray(z, dtype=complex)
        if self.params.N == 0:
            return np.full(z.shape, np.inf)
        out = self.run(z, order=1)
        best = np.full(z.shape, np.inf)
        for n in range(1, self.params.N + 1):
            qn = out["q"][n - 1]
            for q0 in self._step_zeros(n):
                d = qn - q0
                re = (d.real + np.pi) % (2 * np.pi) - np.pi
                best = np.minimum(best, np.hypot(re, d.imag))
        return best


@dataclass(frozen=True)
class EffectiveTrajectory:
    """One run of the effective map with tangent data and running action.

    `action_bulk` carries the kinetic, potential and entrance boundary
    terms (principal log branches); the exit terms attach once the exit
    label is known.
    """

    points: list[ComplexPoint]
    tangent: list[tuple[complex, complex]]
    influence: list[complex]
    spin_sequence: list[SpinState]
    action_bulk: complex
    params: KickParams
    entrance: CoherentLabel

    def action_with_exit(self, exit_label: CoherentLabel) -> complex:
        qN = self.points[-1].q
        return (self.action_bulk + 0.5j * (qN - exit_label.q) ** 2
                - exit_label.p * (qN - 0.5 * exit_label.q))

    def map_residuals(self) -> list[float]:
        """Per-step defect of the effective map equations."""
        res = []
        p = self.params
        for n in range(1, p.N + 1):
            qprev, pprev = self.points[n - 1].q, self.points[n - 1].p
            qn, pn = self.points[n].q, self.points[n].p
            Z, Z1, _ = _kick_z_derivs(qprev, self.spin_sequence[n - 1],
                                      self.spin_sequence[n], p)
            dV = 1j * p.hbar * Z1 / Z
            res.append(float(max(abs(pn - (pprev - dV)), abs(qn - (qprev + pn)))))
        return res


def propagate_effective(Qprime: complex, entrance: CoherentLabel,
                        spin_sequence: list[SpinState], p: KickParams,
                        ) -> EffectiveTrajectory:
    """Run the effective map from one Q', collecting points and action."""
    pmap = RotorMap(entrance, spin_sequence, p)
    out = pmap.run(np.asarray([Qprime], dtype=complex))
    Z = out["Z"][:, 0] if out["Z"].size else np.empty(0, dtype=complex)
    if Z.size and np.any(np.abs(Z) < Z_TINY):
        raise ZeroOfInfluenceFunctional(complex(out["q"][0, 0]))
    pts = [ComplexPoint(complex(out["q"][n, 0]), complex(out["p"][n, 0]))
           for n in range(p.N + 1)]
    tangent = [(complex(out["dqs"][n, 0]), complex(out["dps"][n, 0]))
               for n in range(p.N + 1)]
    bulk = 0j
    for n in range(p.N):
        bulk += 0.5 * complex(out["p"][n + 1, 0]) ** 2 \
            - 1j * p.hbar * complex(np.log(Z[n]))
    q0 = complex(out["q"][0, 0])
    bulk += 0.5j * (q0 - entrance.q) ** 2 + entrance.p * (q0 - 0.5 * entrance.q)
    return EffectiveTrajectory(
        points=pts,
        tangent=tangent,
        influence=[complex(v) for v in Z],
        spin_sequence=list(spin_sequence),
        action_bulk=bulk,
        params=p,
        entrance=entrance,
    )


def semiclassical_decomposed_kernel(entrance: CoherentLabel,
                                    exit_label: CoherentLabel,
                                    spin_sequence: list[SpinState],
                                    p: KickParams, *,
                                    eps_amp: float = EPS_AMP,
                                    stokes=None, seeds=None,
                                    pmap: RotorMap | None = None,
                                    ) -> tuple[complex, list[SaddleBranch]]:
    """Boundary-value saddle sum for K^N_d with cutoff and Stokes filtering."""
    if pmap is None:
        pmap = RotorMap(entrance, spin_sequence, p)
    branches = solve_boundary(pmap, exit_label, seeds=seeds)
    im_cut = p.hbar * np.log(1.0 / eps_amp)
    branches = [b if b.F.imag <= im_cut else b.marked(physical=False)
                for b in branches]
    if stokes is not None:
        kept = [b for b in branches if b.flags.physical]
        kept = stokes.filter_branches(kept)
        branches = kept + [b for b in branches if not b.flags.physical]
    total = sum((b.weight(p.hbar) for b in branches if b.flags.physical),
                start=0j)
    return total, branches


@dataclass(frozen=True)
class DomainD:
    """Sublevel set of Im F over a Q'-plane window."""

    window: Window
    resolution: int
    cutoff: float
    imf: np.ndarray
    mask: np.ndarray
    exit_label: CoherentLabel
    component: str = "anchor"

    @property
    def cell_area(self) -> float:
        dx = (self.window.re_max - self.window.re_min) / (self.resolution - 1)
        dy = (self.window.im_max - self.window.im_min) / (self.resolution - 1)
        return dx * dy

    @property
    def area(self) -> float:
        return float(self.mask.sum() * self.cell_area)

    def bounding_window(self, pad: float = 0.0) -> Window | None:
        if not self.mask.any():
            return None
        res = np.linspace(self.window.re_min, self.window.re_max, self.resolution)
        ims = np.linspace(self.window.im_min, self.window.im_max, self.resolution)
        ii, jj = np.nonzero(self.mask)
        return Window(res[ii.min()] - pad, res[ii.max()] + pad,
                      ims[jj.min()] - pad, ims[jj.max()] + pad)


def domain_D(entrance: CoherentLabel, exit_label: CoherentLabel,
             spin_sequence: list[SpinState], p: KickParams,
             window: Window | None = None, resolution: int = 128,
             cutoff: float = IMF_CUTOFF_DEFAULT,
             component: str = "anchor") -> DomainD:
    """Im F sampled over the Q'-plane and thresholded at the cutoff.

    Exit boundary terms use the fixed exit label.  Im F is independent of
    the log branch, so the scan needs no continuity bookkeeping; grid
    points whose trajectory lands on a zero of Z get Im F = +inf.

    component="raw" keeps the literal sublevel set.  The default "anchor"
    restricts it to the connected component reachable from the anchor:
    far from the real manifold the complexified kick makes |Z| blow up
    and Im F dives to large negative values, a super-exponential regime
    that hosts no physical saddle and would otherwise pollute the area.
    """
    pmap = RotorMap(entrance, spin_sequence, p)
    if window is None:
        window = Window.centered(pmap.anchor,
                                 DOMAIN_HALFWIDTH_IN_SQRT_HBAR * np.sqrt(p.hbar))
    res = np.linspace(window.re_min, window.re_max, resolution)
    ims = np.linspace(window.im_min, window.im_max, resolution)
    zs = (res[:, None] + 1j * ims[None, :])
    out = pmap.run(zs, order=1)
    q0, qN = out["q"][0], out["q"][-1]
    imf = np.imag(0.5j * (q0 - entrance.q) ** 2
                  + entrance.p * (q0 - 0.5 * entrance.q)
                  + 0.5j * (qN - exit_label.q) ** 2
                  - exit_label.p * (qN - 0.5 * exit_label.q))
    for n in range(p.N):
        imf += np.imag(0.5 * out["p"][n + 1] ** 2)
        absZ = np.abs(out["Z"][n])
        with np.errstate(divide="ignore"):
            imf += -p.hbar * np.where(absZ > 0, np.log(absZ), -np.inf)
    imf = np.where(np.isfinite(imf), imf, np.inf)
    mask = imf <= cutoff
    if component == "anchor" and mask.any():
        mask = _anchor_component(mask, res, ims, pmap.anchor)
    return DomainD(window=window, resolution=resolution, cutoff=cutoff,
                   imf=imf, mask=mask, exit_label=exit_label,
                   component=component)


def _anchor_component(mask: np.ndarray, res: np.ndarray, ims: np.ndarray,
                      anchor: complex) -> np.ndarray:
    """4-connected component of the mask nearest to the anchor."""
    ii, jj = np.nonzero(mask)
    d2 = (res[ii] - anchor.real) ** 2 + (ims[jj] - anchor.imag) ** 2
    seed = (int(ii[np.argmin(d2)]), int(jj[np.argmin(d2)]))
    out = np.zeros_like(mask)
    stack = [seed]
    out[seed] = True
    nI, nJ = mask.shape
    while stack:
        i, j = stack.pop()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if 0 <= a < nI and 0 <= b < nJ and mask[a, b] and not out[a, b]:
                out[a, b] = True
                stack.append((a, b))
    return out


def classical_exit_label(entrance: CoherentLabel, p: KickParams) -> CoherentLabel:
    """Exit label on the real standard-map image of the entrance.

    The spin-free map q -> q + p + K sin q places the exit where the
    packet actually travels, which is where the decomposed kernel has
    appreciable magnitude (no angle wrapping: line kinematics).
    """
    q, mom = entrance.q, entrance.p
    for _ in range(p.N):
        mom = mom + p.K * np.sin(q)
        q = q + mom
    return CoherentLabel(q, mom)
