"""Two-level (spin-1/2) algebra shared by both models.

Exact 2x2 propagators for generators built from sigma_z and sigma_x, the
influence functions Z(q) of the heavy curve-crossing model and of the
spin-kicked rotor, effective actions/potentials with analytic first and
second q-derivatives, and a grid-seeded Newton search for the complex
zeros of Z.

All scalar entry points also accept numpy arrays of complex q and
broadcast elementwise; Z and its derivatives are entire functions of q.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroOfInfluenceFunctional

SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

# |Z| below this is treated as an exact zero of the influence function.
Z_TINY = 1e-12

# Switch the even functions cos(sqrt(s)), sinc(sqrt(s)) and their
# s-derivatives to power series below this |s|; removes both the spurious
# square-root branch sensitivity and the cancellation in (cos - sinc)/2s.
_SERIES_CUT = 1e-2
_SERIES_TERMS = 14


@dataclass(frozen=True)
class SpinState:
    """Normalized two-component internal state with amplitudes (up, down)."""

    up: complex
    down: complex

    def vec(self) -> np.ndarray:
        return np.array([self.up, self.down], dtype=complex)

    def norm(self) -> float:
        return float(np.sqrt(abs(self.up) ** 2 + abs(self.down) ** 2))

    def normalized(self) -> "SpinState":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero spinor")
        return SpinState(self.up / n, self.down / n)


UP = SpinState(1.0 + 0.0j, 0.0 + 0.0j)
DOWN = SpinState(0.0 + 0.0j, 1.0 + 0.0j)


@dataclass(frozen=True)
class HeavyParams:
    """Parameters of the heavy two-state linear curve-crossing model.

    hbar sets the action scale, F the slope of the crossing terms,
    J the transition element and t the evolution time.
    """

    hbar: float = 0.25
    F: float = 1.0
    J: float = 0.75
    t: float = 1.5

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if not np.isfinite(self.t):
            raise ValueError("t must be finite")


@dataclass(frozen=True)
class KickParams:
    """Parameters of the spin-kicked rotor.

    K is the spin-independent kick strength, deltaK the spin-dependent
    one, J the transition element and N the number of kicks.
    """

    K: float
    N: int = 3
    hbar: float = 0.25
    deltaK: float = 1.0
    J: float = 0.75

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if self.N < 0:
            raise ValueError("N must be non-negative")


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle in a complex plane."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("window must have positive extent")

    def contains(self, z, pad: float = 0.0) -> np.ndarray:
        z = np.asarray(z)
        return (
            (z.real >= self.re_min - pad)
            & (z.real <= self.re_max + pad)
            & (z.imag >= self.im_min - pad)
            & (z.imag <= self.im_max + pad)
        )

    def grid(self, n_re: int, n_im: int | None = None) -> np.ndarray:
        n_im = n_re if n_im is None else n_im
        re = np.linspace(self.re_min, self.re_max, n_re)
        im = np.linspace(self.im_min, self.im_max, n_im)
        return (re[:, None] + 1j * im[None, :]).ravel()

    @classmethod
    def centered(cls, center: complex, half_width: float) -> "Window":
        c = complex(center)
        return cls(c.real - half_width, c.real + half_width,
                   c.imag - half_width, c.imag + half_width)


# ---------------------------------------------------------------------------
# even functions of the rotation angle


def _cos_sinc(s):
    """cos(sqrt(s)) and sin(sqrt(s))/sqrt(s) as entire functions of s."""
    s = np.asarray(s, dtype=complex)
    shape = s.shape
    s = np.atleast_1d(s)
    small = np.abs(s) < _SERIES_CUT
    ec = np.empty_like(s)
    fs = np.empty_like(s)
    if np.any(~small):
        with np.errstate(over="ignore", invalid="ignore"):
            r = np.sqrt(s[~small])
            ec[~small] = np.cos(r)
            fs[~small] = np.sin(r) / r
    if np.any(small):
        x = s[small]
        e = np.zeros_like(x)
        f = np.zeros_like(x)
        term = np.ones_like(x)
        for k in range(_SERIES_TERMS):
            e += term / _fact(2 * k)
            f += term / _fact(2 * k + 1)
            term *= -x
        ec[small] = e
        fs[small] = f
    return ec.reshape(shape), fs.reshape(shape)


def _sinc_d1_d2(s):
    """First and second s-derivatives of sinc(sqrt(s))."""
    s = np.asarray(s, dtype=complex)
    shape = s.shape
    s = np.atleast_1d(s)
    small = np.abs(s) < _SERIES_CUT
    d1 = np.empty_like(s)
    d2 = np.empty_like(s)
    if np.any(~small):
        with np.errstate(over="ignore", invalid="ignore"):
            sb = s[~small]
            ec, fs = _cos_sinc(sb)
            d1b = (ec - fs) / (2.0 * sb)
            ec1 = -0.5 * fs
            d2[~small] = ((ec1 - d1b) * sb - (ec - fs)) / (2.0 * sb * sb)
            d1[~small] = d1b
    if np.any(small):
        x = s[small]
        a = np.zeros_like(x)
        b = np.zeros_like(x)
        for k in range(1, _SERIES_TERMS + 1):
            coeff = ((-1.0) ** k) / _fact(2 * k + 1)
            a += coeff * k * _safe_pow(x, k - 1)
            if k >= 2:
                b += coeff * k * (k - 1) * _safe_pow(x, k - 2)
        d1[small] = a
        d2[small] = b
    return d1.reshape(shape), d2.reshape(shape)


_FACTS = [1.0]
for _k in range(1, 64):
    _FACTS.append(_FACTS[-1] * _k)


def _fact(n: int) -> float:
    return _FACTS[n]


def _safe_pow(x, k):
    if k == 0:
        return np.ones_like(x)
    return x ** k


def su2_exp(a, b, c0) -> np.ndarray:
    """exp(-i (c0*1 + a*sigma_z + b*sigma_x)) as a closed form.

    Returns exp(-i c0) [cos(w) 1 - i sinc(w) (a sigma_z + b sigma_x)] with
    w = sqrt(a^2 + b^2); the result only involves even functions of w so
    the square-root branch is immaterial.  Scalars give a (2, 2) array;
    array arguments broadcast to shape (..., 2, 2).
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    c0 = np.asarray(c0, dtype=complex)
    a, b, c0 = np.broadcast_arrays(a, b, c0)
    s = a * a + b * b
    ec, fs = _cos_sinc(s)
    phase = np.exp(-1j * c0)
    out = np.empty(a.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = phase * (ec - 1j * fs * a)
    out[..., 0, 1] = phase * (-1j * fs * b)
    out[..., 1, 0] = phase * (-1j * fs * b)
    out[..., 1, 1] = phase * (ec + 1j * fs * a)
    return out


def su2_apply(a, b, c0, up, down):
    """Apply su2_exp(a, b, c0) to the spinor (up, down) without forming matrices."""
    s = a * a + b * b
    ec, fs = _cos_sinc(s)
    phase = np.exp(-1j * np.asarray(c0, dtype=complex))
    new_up = phase * (ec * up - 1j * fs * (a * up + b * down))
    new_down = phase * (ec * down - 1j * fs * (b * up - a * down))
    return new_up, new_down


def _bracket(eta_out: SpinState, eta_in: SpinState):
    """Matrix elements <out|1|in>, <out|sigma_z|in>, <out|sigma_x|in>."""
    bo = np.conj(eta_out.vec())
    vi = eta_in.vec()
    u = bo @ vi
    wz = bo @ (SIGMA_Z @ vi)
    wx = bo @ (SIGMA_X @ vi)
    return u, wz, wx


# ---------------------------------------------------------------------------
# influence functions and derivatives


def influence_heavy(q, eta_in: SpinState, eta_out: SpinState, p: HeavyParams):
    """Z(q) = <eta_out| exp(-i V(q) t / hbar) |eta_in> for the heavy model."""
    return _heavy_z_derivs(q, eta_in, eta_out, p, order=0)[0]


def _heavy_z_derivs(q, eta_in, eta_out, p: HeavyParams, order: int = 2):
    """Z(q) and up to two analytic q-derivatives, vectorized."""
    q = np.asarray(q, dtype=complex)
    u, wz, wx = _bracket(eta_out, eta_in)
    A = -p.F * p.t * q
    B = p.J * p.t + 0j
    Ap = -p.F * p.t
    s = A * A + B * B
    ec, fs = _cos_sinc(s)
    g = A * wz + B * wx
    Z = u * ec - 1j * fs * g
    if order == 0:
        return (Z,)
    fs1, fs2 = _sinc_d1_d2(s)
    ec1 = -0.5 * fs
    ec2 = -0.5 * fs1
    sp = 2.0 * A * Ap
    spp = 2.0 * Ap * Ap
    Z1 = u * ec1 * sp - 1j * (Ap * wz * fs + g * fs1 * sp)
    if order == 1:
        return Z, Z1
    Z2 = (u * (ec2 * sp * sp + ec1 * spp)
          - 1j * (2.0 * Ap * wz * fs1 * sp + g * (fs2 * sp * sp + fs1 * spp)))
    return Z, Z1, Z2


def influence_kick(q, eta_in: SpinState, eta_out: SpinState, p: KickParams):
    """Z_n(q) = <eta_out| exp(-i V(q) / hbar) |eta_in> for one rotor kick."""
    return _kick_z_derivs(q, eta_in, eta_out, p, order=0)[0]


def _kick_z_derivs(q, eta_in, eta_out, p: KickParams, order: int = 2):
    q = np.asarray(q, dtype=complex)
    u, wz, wx = _bracket(eta_out, eta_in)
    with np.errstate(over="ignore", invalid="ignore"):
        c = np.cos(q)
        sn = np.sin(q)
        A = p.deltaK * c
        B = p.J + 0j
        s = A * A + B * B
        ec, fs = _cos_sinc(s)
        g = A * wz + B * wx
        W = u * ec - 1j * fs * g
        pre = np.exp(-1j * p.K * c / p.hbar)
        Z = pre * W
        if order == 0:
            return (Z,)
        fs1, fs2 = _sinc_d1_d2(s)
        ec1 = -0.5 * fs
        ec2 = -0.5 * fs1
        Ap = -p.deltaK * sn
        App = -p.deltaK * c
        sp = 2.0 * A * Ap
        spp = 2.0 * (Ap * Ap + A * App)
        W1 = u * ec1 * sp - 1j * (Ap * wz * fs + g * fs1 * sp)
        h = 1j * p.K * sn / p.hbar          # d/dq log(pre)
        hp = 1j * p.K * c / p.hbar
        Z1 = pre * (W1 + h * W)
        if order == 1:
            return Z, Z1
        W2 = (u * (ec2 * sp * sp + ec1 * spp)
              - 1j * (App * wz * fs + 2.0 * Ap * wz * fs1 * sp
                      + g * (fs2 * sp * sp + fs1 * spp)))
        Z2 = pre * (W2 + 2.0 * h * W1 + (h * h + hp) * W)
    return Z, Z1, Z2


def _log_derivs(Z, Z1, Z2, q):
    absZ = np.abs(Z)
    if np.any(absZ < Z_TINY):
        bad = np.argmin(absZ)
        qb = np.asarray(q, dtype=complex).ravel()[bad] if np.ndim(q) else complex(q)
        raise ZeroOfInfluenceFunctional(qb)
    L = np.log(Z)
    L1 = Z1 / Z
    L2 = Z2 / Z - L1 * L1
    return L, L1, L2


def eff_action_heavy(q, eta_in: SpinState, eta_out: SpinState, p: HeavyParams):
    """Effective action S = -i hbar ln Z and its first two q-derivatives.

    The logarithm is the principal value; the raw Z is returned alongside
    so trajectory-level callers can keep the branch continuous along their
    own path.  Raises ZeroOfInfluenceFunctional within Z_TINY of a zero.
    """
    Z, Z1, Z2 = _heavy_z_derivs(q, eta_in, eta_out, p)
    L, L1, L2 = _log_derivs(Z, Z1, Z2, q)
    h = -1j * p.hbar
    return h * L, h * L1, h * L2, Z


def eff_potential_kick(q, eta_in: SpinState, eta_out: SpinState, p: KickParams):
    """Effective kick potential V = +i hbar ln Z_n and two q-derivatives."""
    Z, Z1, Z2 = _kick_z_derivs(q, eta_in, eta_out, p)
    L, L1, L2 = _log_derivs(Z, Z1, Z2, q)
    h = 1j * p.hbar
    return h * L, h * L1, h * L2, Z


# ---------------------------------------------------------------------------
# zeros of Z


def find_z_zeros(window: Window, params, eta_in: SpinState, eta_out: SpinState,
                 *, seeds_per_axis: int = 40, report_tol: float = 1e-10,
                 newton_tol: float = 1e-13, max_iter: int = 50,
                 dedup_radius: float = 1e-6) -> list[complex]:
    """Complex zeros of the influence function inside a window.

    Newton iteration from a uniform seed grid; non-converging seeds are
    dropped silently.  Zeros are deduplicated and sorted by real part,
    then imaginary part.  `params` selects the model (HeavyParams or
    KickParams).
    """
    if isinstance(params, HeavyParams):
        def zfun(q):
            return _heavy_z_derivs(q, eta_in, eta_out, params, order=1)
    elif isinstance(params, KickParams):
        def zfun(q):
            return _kick_z_derivs(q, eta_in, eta_out, params, order=1)
    else:
        raise TypeError(f"unsupported parameter type {type(params)!r}")

    z = window.grid(seeds_per_axis)
    scale = max(window.re_max - window.re_min, window.im_max - window.im_min)
    for _ in range(max_iter):
        Z, Z1 = zfun(z)
        ok = (np.abs(Z1) > 0) & np.isfinite(Z) & np.isfinite(Z1)
        # discard stationary points and runaways: they cannot converge here
        z = z[ok]
        Z = Z[ok]
        Z1 = Z1[ok]
        if z.size == 0:
            return []
        step = Z / Z1
        keep = np.abs(step) <= scale
        z = (z - step)[keep]
        if np.all(np.abs(Z[keep]) < newton_tol):
            break

    if z.size == 0:
        return []
    resid = np.abs(zfun(z)[0])
    z = z[(resid < report_tol) & window.contains(z, pad=1e-9)]
    return _dedup_sorted(z, dedup_radius)


def _dedup_sorted(z: np.ndarray, radius: float) -> list[complex]:
    """Cluster points within `radius` and return sorted representatives."""
    order = np.lexsort((z.imag, z.real))
    out: list[complex] = []
    for v in z[order]:
        if all(abs(v - u) > radius for u in out):
            out.append(complex(v))
    return out
