"""Closed-form pieces of the 1-D stochastic wave equation.

Green kernel, d'Alembert part of the mild solution, non-linearity catalog
with its analytic constants, and the exact moment formulas that double as
test oracles for the lattice solver.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np


@dataclass(frozen=True)
class WaveKernel:
    kappa: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("wave speed kappa must be positive, got %r" % (self.kappa,))


def kernel_value(t, x, kernel):
    """Green function of the wave operator: 1/2 on the closed cone |x| <= kappa*t."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("kernel_value needs t > 0")
    out = np.where(np.abs(x) <= kernel.kappa * t, 0.5, 0.0)
    return out[()] if out.ndim == 0 else out


class KernelIdentities(NamedTuple):
    l2: float
    time_integral: float
    upsilon: float


def kernel_identities(t, beta, kernel):
    if not t > 0 or not beta > 0:
        raise ValueError("kernel_identities needs t > 0 and beta > 0")
    k = kernel.kappa
    return KernelIdentities(l2=k * t / 2.0, time_integral=k * t * t / 4.0,
                            upsilon=k / (2.0 * beta * beta))


# ---------------------------------------------------------------------------
# Initial data profiles
# ---------------------------------------------------------------------------

class Constant:
    """Spatially constant profile."""

    kind = "constant"

    def __init__(self, c):
        self.c = float(c)
        self.support = 0.0 if self.c == 0.0 else None

    def __call__(self, x):
        return np.full(np.shape(x), self.c)[()]

    def antiderivative(self, x):
        return self.c * np.asarray(x, dtype=float)

    def integral(self, a, b):
        return self.c * (np.asarray(b, dtype=float) - np.asarray(a, dtype=float))

    @property
    def sup(self):
        return self.c

    @property
    def inf(self):
        return self.c

    def to_dict(self):
        return {"kind": "constant", "c": self.c}


class Bump:
    """height * (1 - |x|/K)_+^alpha, Hölder of order alpha, supported on [-K, K]."""

    kind = "bump"

    def __init__(self, K, alpha=0.5, height=1.0):
        if not K > 0:
            raise ValueError("bump radius K must be positive")
        if not 0 < alpha <= 1:
            raise ValueError("Hölder order alpha must lie in (0, 1]")
        if height < 0:
            raise ValueError("bump height must be non-negative")
        self.K = float(K)
        self.alpha = float(alpha)
        self.height = float(height)
        self.support = self.K

    def __call__(self, x):
        r = np.clip(1.0 - np.abs(np.asarray(x, dtype=float)) / self.K, 0.0, None)
        return (self.height * r ** self.alpha)[()]

    def antiderivative(self, x):
        # F(x) = int_{-K}^{x} u, closed form; odd part plus half the mass
        x = np.asarray(x, dtype=float)
        a1 = self.alpha + 1.0
        half = self.height * self.K / a1
        r = np.clip(1.0 - np.abs(x) / self.K, 0.0, None)
        partial = half * (1.0 - r ** a1)
        return (half + np.sign(x) * partial)[()]

    def integral(self, a, b):
        return self.antiderivative(b) - self.antiderivative(a)

    @property
    def sup(self):
        return self.height

    @property
    def inf(self):
        return 0.0

    def to_dict(self):
        return {"kind": "bump", "K": self.K, "alpha": self.alpha, "height": self.height}


class Indicator:
    """height on [-K, K], zero elsewhere."""

    kind = "indicator"

    def __init__(self, K, height=1.0):
        if not K > 0:
            raise ValueError("indicator radius K must be positive")
        self.K = float(K)
        self.height = float(height)
        self.support = self.K

    def __call__(self, x):
        return np.where(np.abs(x) <= self.K, self.height, 0.0)[()]

    def antiderivative(self, x):
        return self.height * (np.clip(np.asarray(x, dtype=float), -self.K, self.K) + self.K)

    def integral(self, a, b):
        return self.antiderivative(b) - self.antiderivative(a)

    @property
    def sup(self):
        return self.height

    @property
    def inf(self):
        return 0.0

    def to_dict(self):
        return {"kind": "indicator", "K": self.K, "height": self.height}


class Tabulated:
    """Piecewise-linear interpolation of samples, zero outside the sample range."""

    kind = "tabulated"

    def __init__(self, xs, values):
        xs = np.asarray(xs, dtype=float)
        values = np.asarray(values, dtype=float)
        if xs.ndim != 1 or xs.shape != values.shape or xs.size < 2:
            raise ValueError("tabulated profile needs matching 1-D arrays of length >= 2")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("tabulated abscissae must be strictly increasing")
        self.xs = xs
        self.values = values
        self.support = float(np.max(np.abs(xs[[0, -1]])))
        seg = 0.5 * (values[1:] + values[:-1]) * np.diff(xs)
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])

    def __call__(self, x):
        return np.interp(x, self.xs, self.values, left=0.0, right=0.0)[()]

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.xs[0], self.xs[-1])
        i = np.clip(np.searchsorted(self.xs, xc, side="right") - 1, 0, self.xs.size - 2)
        x0 = self.xs[i]
        y0 = self.values[i]
        slope = (self.values[i + 1] - y0) / (self.xs[i + 1] - x0)
        h = xc - x0
        return (self._cum[i] + y0 * h + 0.5 * slope * h * h)[()]

    def integral(self, a, b):
        return self.antiderivative(b) - self.antiderivative(a)

    @property
    def sup(self):
        return float(max(self.values.max(), 0.0))

    @property
    def inf(self):
        return float(min(self.values.min(), 0.0))

    def to_dict(self):
        return {"kind": "tabulated", "xs": self.xs.tolist(), "values": self.values.tolist()}


_PROFILES = {"constant": Constant, "bump": Bump, "indicator": Indicator, "tabulated": Tabulated}


def profile_from_dict(d):
    d = dict(d)
    kind = d.pop("kind")
    try:
        cls = _PROFILES[kind]
    except KeyError:
        raise ValueError("unknown initial profile kind %r" % kind) from None
    return cls(**d)


@dataclass(frozen=True)
class InitialData:
    u0: object = field(default_factory=lambda: Constant(1.0))
    v0: object = field(default_factory=lambda: Constant(0.0))

    def __post_init__(self):
        if self.u0.inf < 0:
            raise ValueError("u0 must be non-negative")
        if isinstance(self.u0, Tabulated) and np.any(self.u0.values < 0):
            raise ValueError("u0 must be non-negative")

    @property
    def is_constant(self):
        return isinstance(self.u0, Constant) and isinstance(self.v0, Constant)

    @property
    def support(self):
        """Radius K of the joint support, or None when either profile is not compact."""
        if self.u0.support is None or self.v0.support is None:
            return None
        return max(self.u0.support, self.v0.support)

    @property
    def u0_sup(self):
        return self.u0.sup

    @property
    def u0_inf(self):
        return self.u0.inf

    @property
    def v0_sup(self):
        return self.v0.sup

    @property
    def v0_inf(self):
        return self.v0.inf

    def to_dict(self):
        return {"u0": self.u0.to_dict(), "v0": self.v0.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(u0=profile_from_dict(d["u0"]), v0=profile_from_dict(d["v0"]))

    @classmethod
    def constant(cls, u0=1.0, v0=0.0):
        return cls(Constant(u0), Constant(v0))


def initial_wave(t, x, init, kernel):
    """d'Alembert part U0 + V0 of the mild solution at (t, x)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("initial_wave needs t >= 0")
    x = np.asarray(x, dtype=float)
    r = kernel.kappa * t
    u = 0.5 * (init.u0(x + r) + init.u0(x - r))
    v = 0.5 * init.v0.integral(x - r, x + r)
    return (np.asarray(u) + np.asarray(v))[()]


# ---------------------------------------------------------------------------
# Non-linearities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SigmaTraits:
    lip: float
    ell: float
    eps0: float
    s0: float
    grid_resolution: Optional[float] = None

    def __post_init__(self):
        if not (0 <= self.ell <= self.lip + 1e-12):
            raise ValueError("need 0 <= ell <= lip, got ell=%r lip=%r" % (self.ell, self.lip))
        if self.eps0 > self.s0:
            raise ValueError("need eps0 <= s0")


class SigmaSpec:
    """A globally Lipschitz non-linearity with a recorded Lipschitz constant.

    Build through the constructors ``linear``, ``constant``, ``sandwich``,
    ``log_decay``, ``bounded_below`` or ``custom``.
    """

    def __init__(self, kind, params, func=None, lip=None):
        self.kind = kind
        self.params = dict(params)
        self._func = func
        self._lip = lip
        self._validate()

    def _validate(self):
        p = self.params
        if self.kind == "log_decay":
            if not 0 < p["gamma"] < 1.0 / 3.0:
                raise ValueError("log_decay needs gamma in (0, 1/3)")
            if not p["scale"] > 0:
                raise ValueError("log_decay needs a positive scale")
        elif self.kind == "sandwich":
            if p["center"] - abs(p["amplitude"]) <= 0:
                raise ValueError("sandwich needs center > |amplitude| so that inf sigma > 0")
        elif self.kind == "bounded_below":
            if p["eps0"] <= 0 or p["lam"] < 0:
                raise ValueError("bounded_below needs eps0 > 0 and lam >= 0")
        elif self.kind == "custom":
            if self._lip is None or not np.isfinite(self._lip) or self._lip < 0:
                raise ValueError("custom sigma requires a finite Lipschitz certificate")
        elif self.kind not in ("linear", "constant"):
            raise ValueError("unknown sigma kind %r" % self.kind)

    # constructors
    @classmethod
    def linear(cls, lam):
        return cls("linear", {"lam": float(lam)})

    @classmethod
    def constant(cls, eps0):
        return cls("constant", {"eps0": float(eps0)})

    @classmethod
    def sandwich(cls, center=1.0, amplitude=0.5, omega=1.0):
        """center + amplitude*sin(omega*z); bounded between center -/+ |amplitude|."""
        return cls("sandwich", {"center": float(center), "amplitude": float(amplitude),
                                "omega": float(omega)})

    @classmethod
    def log_decay(cls, gamma, scale=1.0):
        """scale * log(e + |z|)^(-(1/3 - gamma)/2): decays to 0, but slowly enough."""
        return cls("log_decay", {"gamma": float(gamma), "scale": float(scale)})

    @classmethod
    def bounded_below(cls, eps0=0.5, lam=1.0):
        """eps0 + lam*|z|: bounded away from 0, unbounded above."""
        return cls("bounded_below", {"eps0": float(eps0), "lam": float(lam)})

    @classmethod
    def custom(cls, func, lip, name="custom"):
        return cls("custom", {"name": name}, func=func, lip=lip)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        p = self.params
        k = self.kind
        if k == "linear":
            out = p["lam"] * z
        elif k == "constant":
            out = np.full(z.shape, p["eps0"])
        elif k == "sandwich":
            out = p["center"] + p["amplitude"] * np.sin(p["omega"] * z)
        elif k == "log_decay":
            theta = 0.5 * (1.0 / 3.0 - p["gamma"])
            out = p["scale"] * np.log(math.e + np.abs(z)) ** (-theta)
        elif k == "bounded_below":
            out = p["eps0"] + p["lam"] * np.abs(z)
        else:
            out = np.asarray(self._func(z), dtype=float)
        return out[()] if out.ndim == 0 else out

    @property
    def vanishes_at_zero(self):
        return float(self(0.0)) == 0.0

    def to_dict(self):
        if self.kind == "custom":
            raise ValueError("custom sigma has no serializable descriptor")
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        builders = {"linear": cls.linear, "constant": cls.constant, "sandwich": cls.sandwich,
                    "log_decay": cls.log_decay, "bounded_below": cls.bounded_below}
        if kind not in builders:
            raise ValueError("unknown sigma kind %r" % kind)
        return builders[kind](**d)

    def __repr__(self):
        return "SigmaSpec(%s, %r)" % (self.kind, self.params)


def sigma_traits(spec, grid_halfwidth=1e3, grid_points=200001):
    """Lipschitz constant, L_sigma = inf |sigma(x)/x|, inf and sup of sigma.

    Catalog kinds are handled analytically. Custom kinds use their
    Lipschitz certificate and a dense symmetric grid for the rest; the grid
    spacing is recorded in the result.
    """
    p = spec.params
    k = spec.kind
    inf = math.inf
    if k == "linear":
        lam = abs(p["lam"])
        return SigmaTraits(lip=lam, ell=lam, eps0=0.0, s0=inf)
    if k == "constant":
        c = p["eps0"]
        return SigmaTraits(lip=0.0, ell=0.0, eps0=c, s0=c)
    if k == "sandwich":
        a, b = p["center"], abs(p["amplitude"])
        return SigmaTraits(lip=b * abs(p["omega"]), ell=0.0, eps0=a - b, s0=a + b)
    if k == "log_decay":
        theta = 0.5 * (1.0 / 3.0 - p["gamma"])
        # |d/dz log(e+|z|)^-theta| is maximal at z = 0, where it equals theta/e
        return SigmaTraits(lip=p["scale"] * theta / math.e, ell=0.0, eps0=0.0, s0=p["scale"])
    if k == "bounded_below":
        return SigmaTraits(lip=p["lam"], ell=p["lam"], eps0=p["eps0"], s0=inf)

    z = np.linspace(-grid_halfwidth, grid_halfwidth, grid_points)
    vals = spec(z)
    nz = z != 0
    ell = float(np.min(np.abs(vals[nz] / z[nz])))
    return SigmaTraits(lip=float(spec._lip), ell=min(ell, float(spec._lip)),
                       eps0=float(max(vals.min(), 0.0)), s0=float(vals.max()),
                       grid_resolution=float(z[1] - z[0]))


# ---------------------------------------------------------------------------
# Moment oracles and bound curves
# ---------------------------------------------------------------------------

def anderson_second_moment_oracle(t, lam, kernel, v0=0.0):
    """E[u(t,x)^2] for sigma(u) = lam*u with u0 = 1 and constant v0.

    The renewal identity f(t) = (1+v0*kappa*t)^2 + (lam^2 kappa/2) int_0^t f(s)(t-s) ds
    is equivalent to f'' = a f + b, f(0) = 1, f'(0) = 2 v0 kappa, with
    a = lam^2 kappa / 2 and b = 2 v0^2 kappa^2.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    k = kernel.kappa
    a = lam * lam * k / 2.0
    b = 2.0 * v0 * v0 * k * k
    if a == 0.0:
        out = (1.0 + v0 * k * t) ** 2
    else:
        w = math.sqrt(a)
        out = (1.0 + b / a) * np.cosh(w * t) + (2.0 * v0 * k / w) * np.sinh(w * t) - b / a
    return out[()] if np.ndim(out) == 0 else out


def _double_factorial_odd(p):
    # (2p)! / (2^p p!)
    return math.factorial(2 * p) // (2 ** p * math.factorial(p))


def gaussian_moment_oracle(p, t, eps0, kernel, v0=0.0, central=True):
    """Moments of u(t,x) for constant sigma = eps0 and constant data u0 = 1.

    central=True gives E[(u - Eu)^{2p}]; central=False gives the raw E[u^{2p}].
    """
    if p < 1 or int(p) != p:
        raise ValueError("p must be a positive integer")
    if not t > 0:
        raise ValueError("t must be positive")
    p = int(p)
    var = eps0 * eps0 * kernel.kappa * t * t / 4.0
    if central:
        return _double_factorial_odd(p) * var ** p
    mean = 1.0 + v0 * kernel.kappa * t
    total = 0.0
    for i in range(0, 2 * p + 1, 2):
        total += math.comb(2 * p, i) * mean ** (2 * p - i) * _double_factorial_odd(i // 2) * var ** (i // 2)
    return total


class BoundCurves(NamedTuple):
    mu_t: float
    mu_tilde_t: float
    lyap_upper_rate: float
    lyap_lower_rate: float
    picard_a: float


def bound_curves(p, t, traits, kernel, v0=0.0, T=None):
    if p < 1:
        raise ValueError("p must be >= 1")
    if T is None:
        T = t
    if not 0 < t <= T:
        raise ValueError("need 0 < t <= T")
    k = kernel.kappa
    e = math.e
    s0 = traits.s0
    mu = traits.eps0 ** 2 * k * t * t / (2.0 * e)
    mu_tilde = max(2.0 * s0 * s0 * k * t * t / e, 4.0 * v0 * v0 * k * k * t * t)
    return BoundCurves(
        mu_t=mu,
        mu_tilde_t=mu_tilde,
        lyap_upper_rate=p ** 1.5 * traits.lip * math.sqrt(k / 2.0),
        lyap_lower_rate=traits.ell * math.sqrt(k / 2.0),
        picard_a=T * traits.lip * math.sqrt(k),
    )


def bounded_sigma_moment_envelope(p, t, u0_sup, v0_sup, s0, kernel):
    """(u0_sup + v0_sup*kappa*t + sqrt(p*kappa)*S0*t)^p, the moment bound for bounded sigma."""
    k = kernel.kappa
    return (u0_sup + v0_sup * k * t + math.sqrt(p * k) * s0 * t) ** p


def continuum_increment_variance(h, t, kernel):
    """int_0^t int (Gamma_s(y) - Gamma_s(y-h))^2 dy ds for sigma = 1."""
    k = kernel.kappa
    h = np.abs(np.asarray(h, dtype=float))
    s_star = np.minimum(h / (2.0 * k), t)
    # for s < s_star the two cones are disjoint: 1/4 * 2 * 2ks; after, 1/4 * 2h
    out = 0.5 * k * s_star ** 2 + 0.5 * h * (t - s_star)
    return out[()] if out.ndim == 0 else out
