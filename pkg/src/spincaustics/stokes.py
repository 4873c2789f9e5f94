"""Caustic detection, Stokes-line tracing and branch exclusion.

Caustics are zeros of the Jacobian dQ''/dQ' in the Q'-plane; each is a
fold where two saddle branches coalesce.  A caustic whose trajectory
passes close to a zero of the influence function is classified v-type
(log-divergence induced), otherwise a-type (dynamical folding).

Stokes lines are level curves Re(dF) = 0 of the action difference of the
coalescing pair, traced in the Q'-plane with the pair partner continued
alongside.  Near the caustic dF is cubic in (Q' - Q'_c), so the seed
directions come from the fold normal form (probed on a small circle); the
six rays project onto the three Stokes directions of the fold's exit
plane.  Lines that terminate on the logarithmic singularity of a zero of
Z bound a closed lens; the remaining folds get a wedge bounded by the two
traced lines flanking the excluded-sheet direction.  A saddle branch
whose own Q' falls inside such a region is off the deformed integration
contour and is excluded from the kernel; this membership rule (rather
than pointwise dominance, which swaps across the anti-Stokes line inside
the region) is validated against the quadrature-exact kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boundary import SaddleBranch, TrajectoryMap, newton_roots
from .errors import BranchTrackingLost, ZeroOfInfluenceFunctional
from .twolevel import Window

JAC_ZERO_TOL = 1e-8
CAUSTIC_NEWTON_TOL = 1e-10
CAUSTIC_DEDUP = 1e-6
FD_STEP = 1e-6

STEP_IN_SQRT_HBAR = 0.02
CORRECTOR_TOL = 1e-8
SINGULARITY_RADIUS_IN_SQRT_HBAR = 0.05
DEFAULT_ARC_LIMIT_IN_SQRT_HBAR = 8.0


@dataclass(frozen=True)
class CausticPoint:
    """A zero of dQ''/dQ' where a saddle pair coalesces."""

    Qprime: complex
    kind: str                        # "a-psc" | "v-psc"
    jac_deriv: complex
    exit_image: complex
    source_zero: complex | None = None
    zero_distance: float = np.inf


@dataclass
class StokesLine:
    """One traced Re(dF) = 0 curve attached to a caustic."""

    points: np.ndarray
    exit_points: np.ndarray
    partner_points: np.ndarray
    caustic: CausticPoint
    termination: str                 # singularity|arc_limit|window|caustic|tracking_lost|stalled
    endpoint_singularity: complex | None = None
    im_delta: np.ndarray = field(default_factory=lambda: np.empty(0))
    re_residuals: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def seed_direction(self) -> complex:
        d = self.points[min(2, len(self.points) - 1)] - self.caustic.Qprime
        return d / abs(d) if abs(d) else 1.0 + 0j


def find_caustics(pmap: TrajectoryMap, window: Window,
                  seeds_per_axis: int = 40, *, r_v: float | None = None,
                  tol: float = CAUSTIC_NEWTON_TOL) -> list[CausticPoint]:
    """Zeros of the Jacobian inside a Q'-plane window, classified a/v.

    Newton on J(Q') with dJ/dQ' from complex central differences; seeds on
    a uniform grid; an empty list is a valid outcome.
    """
    if r_v is None:
        r_v = np.sqrt(pmap.hbar)

    def res(z):
        _, j = pmap.exit_and_tangent(z)
        _, jp = pmap.exit_and_tangent(z + FD_STEP)
        _, jm = pmap.exit_and_tangent(z - FD_STEP)
        return j, (jp - jm) / (2 * FD_STEP)

    scale = max(window.re_max - window.re_min, window.im_max - window.im_min)
    roots = newton_roots(res, window.grid(seeds_per_axis), tol=tol,
                         dedup=CAUSTIC_DEDUP, max_step=scale)
    out = []
    for r in roots:
        if not window.contains(r):
            continue
        _, j = pmap.exit_and_tangent(np.asarray([r]))
        if abs(complex(j[0])) > JAC_ZERO_TOL:
            continue
        w, _ = pmap.exit_and_tangent(np.asarray([r]))
        wc = complex(pmap.exit_Q(np.asarray([r]))[0])
        _, jp = pmap.exit_and_tangent(np.asarray([r + FD_STEP]))
        _, jm = pmap.exit_and_tangent(np.asarray([r - FD_STEP]))
        jd = (complex(jp[0]) - complex(jm[0])) / (2 * FD_STEP)
        dist, q0 = _nearest_zero(pmap, complex(r))
        kind = "v-psc" if dist < r_v else "a-psc"
        out.append(CausticPoint(Qprime=complex(r), kind=kind, jac_deriv=jd,
                                exit_image=wc,
                                source_zero=q0 if kind == "v-psc" else None,
                                zero_distance=float(dist)))
    out.sort(key=lambda c: (c.Qprime.real, c.Qprime.imag))
    return out


def _nearest_zero(pmap: TrajectoryMap, z: complex) -> tuple[float, complex | None]:
    zeros = pmap.z_zero_positions()
    if not zeros:
        return np.inf, None
    pts = np.asarray(pmap.trajectory_qpoints(np.asarray([z]))).ravel()
    best, best_zero = np.inf, None
    for q0 in zeros:
        d = float(np.min(np.abs(pts - q0)))
        if d < best:
            best, best_zero = d, q0
    return best, best_zero


class _PairTracker:
    """Action difference of a coalescing pair, continued point by point.

    The two log-branch references are connected once through the caustic
    (the pair coalesces there, so dF must vanish in that limit); after
    that each evaluation continues them from the previous one, keeping dF
    free of spurious 2*pi*hbar offsets.
    """

    def __init__(self, pmap: TrajectoryMap, caustic: CausticPoint):
        self.pmap = pmap
        self.caustic = caustic
        self.partner: complex | None = None
        self.ref1 = None
        self.ref2 = None

    def _partner_batch(self, z, guesses, iters=30):
        """Newton the other pair member for each z, vectorized.

        The known root z is deflated out of the shooting residual, so the
        iteration converges to the partner even when seeded arbitrarily
        close to z (tight folds).
        """
        z = np.asarray(z, dtype=complex)
        w = np.asarray(self.pmap.exit_Q(z), dtype=complex)
        u = np.asarray(guesses, dtype=complex).copy()
        for _ in range(iters):
            wu, du = self.pmap.exit_and_tangent(u)
            d = u - z
            with np.errstate(divide="ignore", invalid="ignore"):
                g = (np.asarray(wu) - w) / d
                gp = (np.asarray(du) - g) / d
                step = g / gp
            step = np.where(np.isfinite(step), step, 0.0)
            u = u - step
            if np.all(np.abs(step) < 1e-13 * (1.0 + np.abs(u))):
                break
        wu, _ = self.pmap.exit_and_tangent(u)
        bad = (np.abs(np.asarray(wu) - w) > 1e-9) | (np.abs(u - z) < 1e-10) \
            | ~np.isfinite(u)
        u = np.where(bad, np.nan, u)
        return u

    def _chain_ref(self, start: complex, stop: complex, ref, samples: int = 8):
        for u in np.linspace(start, stop, samples)[1:]:
            _, ref = self.pmap.action_self_exit(complex(u), ln_ref=ref)
        return ref

    def connect(self, z: complex):
        """Establish partner and sheet-connected refs at a first point."""
        zc = self.caustic.Qprime
        zt = self._partner_batch(np.asarray([z]), np.asarray([2 * zc - z]))
        zt = complex(zt[0])
        if not np.isfinite(zt):
            raise BranchTrackingLost(f"partner lost near {z}")
        _, ref1 = self.pmap.action_self_exit(z)
        mid = self._chain_ref(z, zc, ref1)
        ref2 = self._chain_ref(zc, zt, mid)
        self.partner = zt
        self.ref1 = ref1
        self.ref2 = ref2

    def delta_F_batch(self, z):
        """(dF, partners) for an array of nearby z, using current state."""
        if self.partner is None:
            raise BranchTrackingLost("tracker not connected")
        z = np.asarray(z, dtype=complex)
        zt = self._partner_batch(z, np.full(z.shape, self.partner))
        if np.any(~np.isfinite(zt)):
            raise BranchTrackingLost("partner lost in batch")
        F1, _ = self.pmap.action_self_exit_vec(z, ln_ref=_bcast(self.ref1, z.shape))
        F2, _ = self.pmap.action_self_exit_vec(zt, ln_ref=_bcast(self.ref2, z.shape))
        return F1 - F2, zt

    def delta_F(self, z: complex, *, persist: bool = False):
        """(dF, partner) at one z; refs/partner advance only when persist."""
        if self.partner is None:
            self.connect(z)
        dF, zt = self.delta_F_batch(np.asarray([z]))
        dF, zt = complex(dF[0]), complex(zt[0])
        if persist:
            F1, ref1 = self.pmap.action_self_exit(z, ln_ref=self.ref1)
            F2, ref2 = self.pmap.action_self_exit(zt, ln_ref=self.ref2)
            self.partner = zt
            self.ref1 = ref1
            self.ref2 = ref2
        return dF, zt

    def step_to(self, z: complex):
        """Advance the state to z and return (dF, partner)."""
        if self.partner is None:
            self.connect(z)
        zt = self._partner_batch(np.asarray([z]),
                                 np.asarray([self.partner]))
        zt = complex(zt[0])
        if not np.isfinite(zt):
            raise BranchTrackingLost(f"partner lost near {z}")
        F1, ref1 = self.pmap.action_self_exit(z, ln_ref=self.ref1)
        F2, ref2 = self.pmap.action_self_exit(zt, ln_ref=self.ref2)
        self.partner = zt
        self.ref1 = ref1
        self.ref2 = ref2
        return complex(F1) - complex(F2), zt

    def state(self):
        return (self.partner, self.ref1, self.ref2)

    def restore(self, state):
        self.partner, self.ref1, self.ref2 = state

    def reset(self):
        self.partner = None
        self.ref1 = None
        self.ref2 = None


def _bcast(refs, shape):
    if refs is None:
        return None
    return [np.broadcast_to(np.asarray(r), shape) for r in refs]


def _ring_seeds(pmap, caustic, radius, n_probe=48):
    """Walk a probe circle once, refs continued, and bisect Re(dF) = 0.

    Returns (radius, theta, tracker_state) triples, one per sign change of
    Re(dF): the fold's six rays.  The single sheet connection through the
    caustic is made at the first reachable ring point; everything after
    is continuation.  In dense caustic fields the ring shrinks until the
    pair is isolated enough to connect.
    """
    zc = caustic.Qprime
    tracker = _PairTracker(pmap, caustic)
    for _ in range(4):
        thetas = np.linspace(0, 2 * np.pi, n_probe + 1)
        ring = zc + radius * np.exp(1j * thetas)
        try:
            tracker.connect(complex(ring[0]))
            break
        except (BranchTrackingLost, ZeroOfInfluenceFunctional):
            tracker.reset()
            radius *= 0.5
    else:
        return []
    vals = np.full(n_probe + 1, np.nan)
    states = [None] * (n_probe + 1)
    for i, z in enumerate(ring):
        try:
            dF, _ = tracker.step_to(complex(z))
        except (BranchTrackingLost, ZeroOfInfluenceFunctional):
            continue
        vals[i] = dF.real
        states[i] = tracker.state()
    seeds = []
    for i in range(n_probe):
        j = i + 1
        if np.isnan(vals[i]) or np.isnan(vals[j]) or states[i] is None:
            continue
        if vals[i] == 0.0 or vals[i] * vals[j] < 0:
            frac = abs(vals[i]) / (abs(vals[i]) + abs(vals[j]))
            theta = thetas[i] + frac * (thetas[j] - thetas[i])
            seeds.append((radius, theta % (2 * np.pi), states[i]))
    return seeds


def trace_stokes(caustic: CausticPoint, pmap: TrajectoryMap,
                 arc_length_limit: float | None = None, *,
                 window: Window | None = None, step: float | None = None,
                 corrector_tol: float = CORRECTOR_TOL) -> list[StokesLine]:
    """March the Re(dF) = 0 level curves away from a caustic.

    Marching is predictor-corrector with the coalescing partner and the
    log branches of both actions continued along the curve.  A curve stops
    at the arc-length limit, at the window boundary, on collision with the
    log singularity of a zero of Z (endpoint snapped onto its pre-image),
    or when the pair can no longer be continued.
    """
    sq = np.sqrt(pmap.hbar)
    if step is None:
        step = STEP_IN_SQRT_HBAR * sq
    if arc_length_limit is None:
        arc_length_limit = DEFAULT_ARC_LIMIT_IN_SQRT_HBAR * sq
    if window is None:
        c = caustic.Qprime
        half = 1.5 * arc_length_limit
        window = Window(c.real - half, c.real + half, c.imag - half, c.imag + half)
    r_sing = SINGULARITY_RADIUS_IN_SQRT_HBAR * sq

    probe_radius = 4 * step
    lines = []
    for r0, theta, state in _ring_seeds(pmap, caustic, probe_radius):
        line = _march_one(pmap, caustic, theta, state, r0, step,
                          arc_length_limit, window, corrector_tol, r_sing)
        if line is not None:
            lines.append(line)
    return lines


def _march_one(pmap, caustic, theta, state, r0, step, arc_limit, window,
               ctol, r_sing) -> StokesLine | None:
    zc = caustic.Qprime
    z = zc + r0 * np.exp(1j * theta)
    tracker = _PairTracker(pmap, caustic)
    tracker.restore(state)
    fd = 0.25 * step

    def gradient(u):
        probes = np.asarray([u + fd, u - fd, u + 1j * fd, u - 1j * fd])
        dF, _ = tracker.delta_F_batch(probes)
        return ((dF[0].real - dF[1].real) / (2 * fd),
                (dF[2].real - dF[3].real) / (2 * fd))

    settled = _correct(tracker, z, gradient, ctol)
    if settled is None:
        return None
    z = settled
    try:
        g, zt = tracker.step_to(z)
    except (BranchTrackingLost, ZeroOfInfluenceFunctional):
        return None

    pts = [zc, z]
    partners = [2 * zc - z, zt]
    imds = [0.0, g.imag]
    reres = [0.0, abs(g.real)]
    prev_dir = np.exp(1j * theta)
    arclen = r0
    termination = "arc_limit"
    endpoint_sing = None

    while arclen < arc_limit:
        try:
            gx, gy = gradient(z)
        except (BranchTrackingLost, ZeroOfInfluenceFunctional):
            termination = "tracking_lost"
            break
        norm = np.hypot(gx, gy)
        if norm == 0.0:
            termination = "stalled"
            break
        tang = complex(-gy, gx) / norm
        if (tang.real * prev_dir.real + tang.imag * prev_dir.imag) < 0:
            tang = -tang
        # predictor step, halved until the corrector lands on the curve
        z_new = None
        h = step
        for _ in range(3):
            cand = z + h * tang
            landed = _correct(tracker, cand, gradient, ctol)
            if landed is not None and abs(landed - z) > 0.1 * h:
                z_new = landed
                break
            h *= 0.5
        if z_new is None:
            termination = "tracking_lost"
            break
        try:
            dF, zt = tracker.step_to(z_new)
        except (BranchTrackingLost, ZeroOfInfluenceFunctional):
            termination = "tracking_lost"
            break
        if abs(zt - z_new) < 10 * CAUSTIC_DEDUP:
            termination = "caustic"
            break
        prev_dir = (z_new - z) / abs(z_new - z)
        arclen += abs(z_new - z)
        z = z_new
        pts.append(z)
        partners.append(zt)
        imds.append(dF.imag)
        reres.append(abs(dF.real))
        if not window.contains(z):
            termination = "window"
            break
        d_here = float(np.asarray(pmap.min_zero_distance(np.asarray([z]))).ravel()[0])
        if d_here < r_sing:
            termination = "singularity"
            endpoint_sing = _snap_to_singularity(pmap, z)
            if endpoint_sing is not None:
                pts.append(endpoint_sing)
                partners.append(zt)
                imds.append(imds[-1])
                reres.append(reres[-1])
            break

    pts = np.asarray(pts, dtype=complex)
    return StokesLine(
        points=pts,
        exit_points=np.asarray(pmap.exit_Q(pts), dtype=complex),
        partner_points=np.asarray(partners, dtype=complex),
        caustic=caustic,
        termination=termination,
        endpoint_singularity=endpoint_sing,
        im_delta=np.asarray(imds),
        re_residuals=np.asarray(reres),
    )


def _correct(tracker, z, gradient, ctol, max_iter=8) -> complex | None:
    """Newton the point back onto Re(dF) = 0 along the fresh gradient."""
    try:
        for _ in range(max_iter):
            dF, _ = tracker.delta_F_batch(np.asarray([z]))
            if abs(dF[0].real) < ctol:
                return z
            gx, gy = gradient(z)
            n2 = gx * gx + gy * gy
            if n2 == 0.0:
                return None
            z = z - complex(dF[0]).real * complex(gx, gy) / n2
    except (BranchTrackingLost, ZeroOfInfluenceFunctional):
        return None
    return None


def _snap_to_singularity(pmap, z: complex) -> complex | None:
    """Newton the Q' whose trajectory sits exactly on the nearest zero of Z."""
    zeros = pmap.z_zero_positions()
    if not zeros:
        return None
    pts = np.asarray(pmap.trajectory_qpoints(np.asarray([z]))).ravel()
    dists = [(float(np.abs(pts[k] - q0)), k, q0)
             for k in range(len(pts)) for q0 in zeros]
    _, kstep, q0 = min(dists)

    def res(u):
        traj = np.asarray(pmap.trajectory_qpoints(u))
        trajp = np.asarray(pmap.trajectory_qpoints(u + FD_STEP))
        trajm = np.asarray(pmap.trajectory_qpoints(u - FD_STEP))
        r = traj[kstep] - q0
        dr = (trajp[kstep] - trajm[kstep]) / (2 * FD_STEP)
        return r, dr

    roots = newton_roots(res, np.asarray([z]), tol=1e-10)
    if roots.size == 0:
        return None
    return complex(min(roots, key=lambda r: abs(r - z)))


@dataclass(frozen=True)
class StokesRegion:
    """A closed Q'-plane region in which one branch of a pair is excluded."""

    polygon: np.ndarray
    caustic: CausticPoint
    kind: str                        # "lens" | "wedge"

    def contains(self, z: complex) -> bool:
        return _point_in_polygon(complex(z), self.polygon)


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly.real, poly.imag
    return 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _point_in_polygon(z: complex, poly: np.ndarray) -> bool:
    """Even-odd ray casting against the closed polygon."""
    x, y = z.real, z.imag
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i].real, poly[i].imag
        x2, y2 = poly[(i + 1) % n].real, poly[(i + 1) % n].imag
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


def build_regions(pmap: TrajectoryMap, caustics: list[CausticPoint],
                  lines_by_caustic: dict[int, list[StokesLine]],
                  reach: float | None = None) -> list[StokesRegion]:
    """Assemble exclusion regions from traced lines.

    Lines terminating on the same influence-zero pre-image close a lens;
    otherwise the two lines flanking the excluded-sheet direction (found
    by a dominance probe on the fold's shadow side) bound a wedge, closed
    by the chord between their endpoints.
    """
    regions = []
    for ci, caustic in enumerate(caustics):
        lines = lines_by_caustic.get(ci, [])
        if not lines:
            continue
        sing = [ln for ln in lines if ln.termination == "singularity"
                and ln.endpoint_singularity is not None]
        groups: dict[complex, list[StokesLine]] = {}
        for ln in sing:
            key = min(groups, default=None,
                      key=lambda k: abs(k - ln.endpoint_singularity))
            if key is not None and abs(key - ln.endpoint_singularity) < 1e-4:
                groups[key].append(ln)
            else:
                groups[ln.endpoint_singularity] = [ln]
        made_lens = False
        for endpoint, grp in groups.items():
            if len(grp) < 2:
                continue
            # the lens boundary is the outermost pair (the middle Stokes
            # line also reaches the singularity, inside the lens)
            best = max(((a, b) for i, a in enumerate(grp) for b in grp[i + 1:]),
                       key=lambda ab: _polygon_area(
                           np.concatenate([ab[0].points, ab[1].points[::-1]])))
            poly = np.concatenate([best[0].points, best[1].points[::-1]])
            regions.append(StokesRegion(polygon=poly, caustic=caustic, kind="lens"))
            made_lens = True
        if made_lens:
            continue
        wedge = _wedge_region(pmap, caustic, lines, reach=reach)
        if wedge is not None:
            regions.append(wedge)
    return regions


def _wedge_region(pmap, caustic, lines, reach=None) -> StokesRegion | None:
    zdirs = [float(np.angle(ln.seed_direction)) for ln in lines]
    exc_dir = _excluded_direction(pmap, caustic, zdirs)
    if exc_dir is None or len(lines) < 2:
        return None

    def offset(ln):
        return _angdiff(np.angle(ln.seed_direction), exc_dir)

    left = [ln for ln in lines if offset(ln) > 1e-6]
    right = [ln for ln in lines if offset(ln) < -1e-6]
    if not left or not right:
        return None
    lft = min(left, key=offset)
    rgt = max(right, key=offset)
    rpts, lpts = rgt.points, lft.points
    if reach is not None:
        rpts = _extend_radially(rpts, caustic.Qprime, reach)
        lpts = _extend_radially(lpts, caustic.Qprime, reach)
    poly = np.concatenate([rpts, lpts[::-1]])
    return StokesRegion(polygon=poly, caustic=caustic, kind="wedge")


def _extend_radially(points: np.ndarray, apex: complex, reach: float) -> np.ndarray:
    """Prolong a truncated boundary line radially from the apex to `reach`."""
    end = points[-1]
    d = abs(end - apex)
    if d >= reach or d == 0.0:
        return points
    far = apex + (end - apex) * (reach / d)
    return np.concatenate([points, [far]])


def _angdiff(a: float, b: float) -> float:
    return (a - b + np.pi) % (2 * np.pi) - np.pi


def _excluded_direction(pmap, caustic, zdirs) -> float | None:
    """Q'-plane direction of the excluded sheet, by a shadow-side probe.

    The three exit-plane Stokes directions follow from the fold normal
    form; the one most anti-aligned with the direction toward the
    anchor's image marks the shadow side, where the pair member that
    would grow exponentially (the locally dominant one) is off the
    contour.  Its Q'-plane position selects the excluded sheet.
    """
    zc = caustic.Qprime
    jd = caustic.jac_deriv
    if jd == 0:
        return None
    wc = caustic.exit_image
    wa = complex(pmap.exit_Q(np.asarray([pmap.anchor]))[0])
    if abs(wa - wc) == 0:
        return None
    lit = np.angle(wa - wc)
    sq = np.sqrt(pmap.hbar)
    if not zdirs:
        return None
    wdirs = sorted({round((np.angle(jd) + 2 * th) % (2 * np.pi), 3) for th in zdirs})
    wdirs = _cluster_angles(wdirs)
    if not wdirs:
        return None
    mid = max(wdirs, key=lambda d: abs(_angdiff(d, lit)))
    rho = 0.5 * (abs(jd) / 2) * (0.5 * sq) ** 2
    wp = wc + rho * np.exp(1j * mid)
    inner = 2 * (wp - wc) / jd
    best = None
    for sgn in (1, -1):
        guess = zc + sgn * np.sqrt(inner)

        def res(u):
            wu, du = pmap.exit_and_tangent(u)
            return wu - wp, du

        roots = newton_roots(res, np.asarray([guess]), tol=1e-10)
        if roots.size == 0:
            continue
        r = complex(min(roots, key=lambda v: abs(v - guess)))
        try:
            F, _ = pmap.action_self_exit(r)
        except ZeroOfInfluenceFunctional:
            continue
        if best is None or F.imag < best[0]:
            best = (F.imag, r)
    if best is None:
        return None
    return float(np.angle(best[1] - zc))


def _cluster_angles(angles, tol=0.3):
    out = []
    for a in angles:
        if all(abs(_angdiff(a, b)) > tol for b in out):
            out.append(a)
    return out


def filter_branches(branches: list[SaddleBranch], regions: list[StokesRegion],
                    query_point: complex | None = None) -> list[SaddleBranch]:
    """Apply the exclusion rule, returning branches with flags updated.

    With the default query (each branch's own Q') a branch inside any
    region is marked unphysical.  With an explicit query point, the rule
    fires per region containing that point and marks the larger-Im F
    member of the pair attached to that region's caustic.  If every
    branch would be excluded, the smallest-Im F branch is retained: the
    integral always has at least one contributing saddle.
    """
    out = list(branches)
    if query_point is None:
        out = [b.marked(physical=False)
               if b.flags.physical and any(r.contains(b.Qprime) for r in regions)
               else b for b in out]
    else:
        for region in regions:
            if not region.contains(query_point):
                continue
            pair = _match_pair(out, region.caustic)
            if len(pair) == 2:
                sub = max(pair, key=lambda i: out[i].F.imag)
                out[sub] = out[sub].marked(physical=False)
    if out and not any(b.flags.physical for b in out):
        keep = min(range(len(out)), key=lambda i: out[i].F.imag)
        out[keep] = out[keep].marked(physical=True)
    return out


def _match_pair(branches, caustic) -> list[int]:
    """Indices of the two branches closest to a caustic (its local pair)."""
    order = sorted(range(len(branches)),
                   key=lambda i: abs(branches[i].Qprime - caustic.Qprime))
    return order[:2]


@dataclass
class StokesAnalysis:
    """Caustics, traced lines and exclusion regions of one map."""

    pmap: TrajectoryMap
    caustics: list[CausticPoint]
    lines: dict[int, list[StokesLine]]
    regions: list[StokesRegion]

    @classmethod
    def for_map(cls, pmap: TrajectoryMap, window: Window | None = None,
                arc_length_limit: float | None = None) -> "StokesAnalysis":
        sq = np.sqrt(pmap.hbar)
        if window is None:
            window = Window.centered(pmap.anchor, 4.0 * sq)
        caustics = find_caustics(pmap, window)
        lines = {}
        for i, c in enumerate(caustics):
            try:
                lines[i] = trace_stokes(c, pmap, arc_length_limit, window=window)
            except (BranchTrackingLost, ZeroOfInfluenceFunctional):
                lines[i] = []
        regions = build_regions(pmap, caustics, lines)
        return cls(pmap=pmap, caustics=caustics, lines=lines, regions=regions)

    def filter_branches(self, branches, query_point=None):
        return filter_branches(branches, self.regions, query_point)
