"""Reference numerical solvers and random-field sampling.

These are plain-numpy, deterministic routines. They generate training
data and serve as independent ground truth for the learned operators:
a pseudo-spectral viscous Burgers solver (integrating-factor RK4), a
pseudo-spectral 2D Navier-Stokes vorticity solver (Crank-Nicolson
diffusion, Heun advection, Kolmogorov forcing), and a flux-form
finite-difference Darcy solver with conjugate gradients.

Space-time outputs are sampled at t_j = j T / n_t (the same j/n
convention as the spatial grids), so multi-resolution copies of one
trajectory nest exactly under stride subsampling.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError, SolverError, UnsupportedSizeError
from .grids import GridFunction
from .spectral import is_power_of_two, mode_numbers, require_power_of_two, spectral_resample_array


# -- specs -------------------------------------------------------------------


@dataclass
class GrfSpec:
    """Gaussian random field with spectral density scale^2 (4 pi^2 |k|^2 + tau^2)^-alpha."""

    alpha: float = 2.0
    tau: float = 3.0
    scale: float = 1.0

    def validate(self, d):
        if self.tau <= 0:
            raise ConfigError("grf.tau must be positive")
        if self.alpha <= d / 2:
            raise ConfigError(f"grf.alpha must exceed d/2 = {d / 2} for continuous samples")


@dataclass
class BurgersSpec:
    nu: float = 0.1
    t_final: float = 1.0
    dt: float = 1e-3
    n_solver: int = 256
    n_t_out: int = 32

    def validate(self):
        if self.nu <= 0:
            raise ConfigError("burgers.nu must be positive")
        if self.dt <= 0:
            raise ConfigError("burgers.dt must be positive")
        if self.t_final <= 0:
            raise ConfigError("burgers.t_final must be positive")
        if not is_power_of_two(self.n_solver):
            raise ConfigError(f"burgers.n_solver must be a power of two, got {self.n_solver}")
        if self.n_t_out < 2:
            raise ConfigError("burgers.n_t_out must be at least 2")


@dataclass
class DarcySpec:
    n_solver: int = 64
    a_plus: float = 12.0
    a_minus: float = 3.0
    f_const: float = 1.0
    cg_tol: float = 1e-8
    cg_max_iter: int = 20000

    def validate(self):
        if self.a_plus <= 0 or self.a_minus <= 0:
            raise ConfigError("darcy coefficient levels must be positive")
        if self.cg_tol <= 0:
            raise ConfigError("darcy.cg_tol must be positive")
        if self.n_solver < 4:
            raise ConfigError("darcy.n_solver must be at least 4")


@dataclass
class NsSpec:
    nu: float = 1e-3
    forcing_wavenumber: int = 4
    forcing_amplitude: float = 1.0
    t_final: float = 1.0
    dt: float = 1e-3
    n_solver: int = 64
    n_t_out: int = 2

    def validate(self):
        if self.nu <= 0:
            raise ConfigError("ns.nu must be positive")
        if self.forcing_wavenumber < 1:
            raise ConfigError("ns.forcing_wavenumber must be at least 1")
        if self.dt <= 0 or self.t_final <= 0:
            raise ConfigError("ns time parameters must be positive")
        if not is_power_of_two(self.n_solver):
            raise ConfigError(f"ns.n_solver must be a power of two, got {self.n_solver}")
        if self.n_t_out < 2:
            raise ConfigError("ns.n_t_out must be at least 2")


# -- Gaussian random fields ---------------------------------------------------


def sample_grf(spec: GrfSpec, resolution, seed) -> GridFunction:
    """Draw one mean-zero Gaussian field on a periodic grid.

    White noise is scaled in Fourier space so that E |dft(u)_k|^2 equals
    the target density for every mode; conjugate symmetry (hence a real
    field) is inherited from transforming real noise.
    """
    res = (resolution,) if np.isscalar(resolution) else tuple(int(n) for n in resolution)
    d = len(res)
    spec.validate(d)
    for n in res:
        require_power_of_two(n, "grf resolution")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(res)
    noise_hat = np.fft.fftn(noise, norm="forward")
    k2 = np.zeros(res)
    for ax, n in enumerate(res):
        k = mode_numbers(n).astype(np.float64)
        shape = [1] * d
        shape[ax] = n
        k2 = k2 + (2.0 * np.pi * k.reshape(shape)) ** 2
    density = spec.scale ** 2 * (k2 + spec.tau ** 2) ** (-spec.alpha)
    amplitude = np.sqrt(density * noise.size)
    u = np.fft.ifftn(noise_hat * amplitude, norm="forward").real
    return GridFunction(u[None], periodic=True)


def threshold_coefficient(field: GridFunction, a_plus, a_minus) -> GridFunction:
    """Two-level coefficient: a_plus where the field is >= 0, a_minus below."""
    values = np.where(field.values >= 0, float(a_plus), float(a_minus))
    return GridFunction(values, periodic=field.periodic)


# -- viscous Burgers ----------------------------------------------------------


def _slice_stepping(t_final, n_t, dt):
    delta = t_final / n_t
    steps = max(1, int(round(delta / dt)))
    return steps, delta / steps


def solve_burgers(a0: GridFunction, spec: BurgersSpec) -> GridFunction:
    """u_t + u u_x = nu u_xx on the periodic unit interval.

    Pseudo-spectral in space with 2/3-rule dealiasing; integrating-factor
    RK4 in time (diffusion handled exactly). Returns the trajectory
    [1, n_t_out, n_solver] sampled at t_j = j T / n_t_out.
    """
    spec.validate()
    if a0.d != 1 or not a0.periodic:
        raise DomainError("burgers initial condition must be 1d periodic")
    n = spec.n_solver
    if a0.resolution[0] > n:
        raise DomainError(f"initial condition resolution {a0.resolution[0]} exceeds "
                          f"solver resolution {n}")
    u0 = spectral_resample_array(a0.values, [1], [n])[0]

    k = mode_numbers(n).astype(np.float64)
    kappa = 2.0 * np.pi * k
    ik = 1.0j * kappa
    ik[n // 2] = 0.0
    lam = -spec.nu * kappa ** 2
    dealias = np.abs(k) <= n // 3

    def nonlin(v_hat):
        u = np.fft.ifft(v_hat, norm="forward").real
        return -0.5 * ik * dealias * np.fft.fft(u * u, norm="forward")

    steps, h = _slice_stepping(spec.t_final, spec.n_t_out, spec.dt)
    e_half = np.exp(0.5 * h * lam)
    e_full = e_half * e_half

    out = np.empty((spec.n_t_out, n))
    out[0] = u0
    v = np.fft.fft(u0, norm="forward")
    for j in range(1, spec.n_t_out):
        for _ in range(steps):
            k1 = nonlin(v)
            k2 = nonlin(e_half * (v + 0.5 * h * k1))
            k3 = nonlin(e_half * v + 0.5 * h * k2)
            k4 = nonlin(e_full * v + e_half * h * k3)
            v = e_full * v + (h / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
        slice_j = np.fft.ifft(v, norm="forward").real
        if not np.isfinite(slice_j).all():
            raise DivergenceError(f"burgers solve diverged before slice {j}")
        out[j] = slice_j
    return GridFunction(out[None], periodic=True)


# -- Darcy flow ---------------------------------------------------------------


def darcy_faces(a_grid):
    """Harmonic-mean face coefficients on the (n+1)-node inclusive grid.

    ``a_grid`` holds nodal values on the j/n grid; the x = 1 / y = 1 nodes
    wrap around periodically (the sampled fields are periodic).
    """
    a = np.asarray(a_grid, dtype=np.float64)
    n = a.shape[0]
    ext = np.empty((n + 1, n + 1))
    ext[:n, :n] = a
    ext[n, :n] = a[0, :]
    ext[:n, n] = a[:, 0]
    ext[n, n] = a[0, 0]
    fx = 2.0 * ext[:-1, :] * ext[1:, :] / (ext[:-1, :] + ext[1:, :])
    fy = 2.0 * ext[:, :-1] * ext[:, 1:] / (ext[:, :-1] + ext[:, 1:])
    return fx, fy


def darcy_operator(fx, fy, n):
    """Matrix-free SPD operator on the (n-1)^2 interior unknowns."""
    h2 = (1.0 / n) ** 2
    fx_e, fx_w = fx[1:n, 1:n], fx[0:n - 1, 1:n]
    fy_n, fy_s = fy[1:n, 1:n], fy[1:n, 0:n - 1]

    def apply_op(v):
        full = np.zeros((n + 1, n + 1))
        full[1:n, 1:n] = v
        return (fx_e * (v - full[2:n + 1, 1:n]) + fx_w * (v - full[0:n - 1, 1:n])
                + fy_n * (v - full[1:n, 2:n + 1]) + fy_s * (v - full[1:n, 0:n - 1])) / h2

    return apply_op


def conjugate_gradient(apply_op, b, tol, max_iter):
    """Plain CG to a relative-residual tolerance; deterministic."""
    norm_b = np.sqrt(np.sum(b * b))
    x = np.zeros_like(b)
    if norm_b == 0:
        return x, 0
    r = b.copy()
    p = r.copy()
    rs = np.sum(r * r)
    for it in range(max_iter):
        if np.sqrt(rs) <= tol * norm_b:
            return x, it
        ap = apply_op(p)
        alpha = rs / np.sum(p * ap)
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = np.sum(r * r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= tol * norm_b:
        return x, max_iter
    raise SolverError(f"conjugate gradients did not reach tol {tol} "
                      f"in {max_iter} iterations (residual {np.sqrt(rs) / norm_b:.3e})")


def solve_darcy(a: GridFunction, spec: DarcySpec, forcing=None) -> GridFunction:
    """-div(a grad u) = f on the unit square with u = 0 on the boundary.

    5-point flux-form stencil with harmonic-mean face coefficients at the
    resolution of ``a``; the returned grid carries the boundary zeros on
    its stored x = 0 / y = 0 edges. ``forcing`` overrides the constant
    f from the spec with a nodal array (used by manufactured-solution
    checks).
    """
    spec.validate()
    if a.d != 2 or a.resolution[0] != a.resolution[1]:
        raise DomainError("darcy coefficient must be a square 2d grid")
    if np.any(a.values <= 0):
        raise DomainError("darcy coefficient must be positive everywhere")
    n = a.resolution[0]
    fx, fy = darcy_faces(a.values[0])
    apply_op = darcy_operator(fx, fy, n)
    if forcing is None:
        b = np.full((n - 1, n - 1), float(spec.f_const))
    else:
        forcing = np.asarray(forcing, dtype=np.float64)
        b = forcing[1:n, 1:n]
    v, _ = conjugate_gradient(apply_op, b, spec.cg_tol, spec.cg_max_iter)
    u = np.zeros((n, n))
    u[1:n, 1:n] = v
    return GridFunction(u[None], periodic=True)


# -- Navier-Stokes vorticity --------------------------------------------------


def solve_ns_vorticity(w0: GridFunction, spec: NsSpec) -> GridFunction:
    """2D incompressible Navier-Stokes in vorticity form on the periodic square.

    Stream function inverted in Fourier space, 2/3-rule dealiasing,
    Crank-Nicolson diffusion with Heun (RK2) advection, body force
    amplitude * sin(2 pi k_f y). Returns [1, n_t_out, n, n] sampled at
    t_j = j T / n_t_out.
    """
    spec.validate()
    if w0.d != 2 or not w0.periodic:
        raise DomainError("vorticity initial condition must be 2d periodic")
    n = spec.n_solver
    if max(w0.resolution) > n:
        raise DomainError("initial condition finer than solver resolution")
    w_init = spectral_resample_array(w0.values, [1, 2], [n, n])[0]

    k = mode_numbers(n).astype(np.float64)
    kx = 2.0 * np.pi * k[:, None]
    ky = 2.0 * np.pi * k[None, :]
    ikx, iky = 1.0j * kx, 1.0j * ky
    if n % 2 == 0:
        ikx[n // 2, :] = 0.0
        iky[:, n // 2] = 0.0
    k2 = kx ** 2 + ky ** 2
    k2_safe = k2.copy()
    k2_safe[0, 0] = 1.0
    dealias = (np.abs(k[:, None]) <= n // 3) & (np.abs(k[None, :]) <= n // 3)

    y = np.arange(n) / n
    force = spec.forcing_amplitude * np.sin(2.0 * np.pi * spec.forcing_wavenumber * y)
    f_hat = np.fft.fft2(np.broadcast_to(force, (n, n)), norm="forward")

    def nonlin(w_hat):
        psi_hat = w_hat / k2_safe
        psi_hat[0, 0] = 0.0
        u = np.fft.ifft2(iky * psi_hat, norm="forward").real
        v = np.fft.ifft2(-ikx * psi_hat, norm="forward").real
        wx = np.fft.ifft2(ikx * w_hat, norm="forward").real
        wy = np.fft.ifft2(iky * w_hat, norm="forward").real
        return dealias * np.fft.fft2(u * wx + v * wy, norm="forward")

    steps, h = _slice_stepping(spec.t_final, spec.n_t_out, spec.dt)
    explicit = 1.0 - 0.5 * h * spec.nu * k2
    implicit = 1.0 / (1.0 + 0.5 * h * spec.nu * k2)

    out = np.empty((spec.n_t_out, n, n))
    out[0] = w_init
    w_hat = np.fft.fft2(w_init, norm="forward")
    for j in range(1, spec.n_t_out):
        for _ in range(steps):
            n0 = nonlin(w_hat)
            w_star = implicit * (explicit * w_hat + h * (-n0 + f_hat))
            n1 = nonlin(w_star)
            w_hat = implicit * (explicit * w_hat + h * (-0.5 * (n0 + n1) + f_hat))
        slice_j = np.fft.ifft2(w_hat, norm="forward").real
        if not np.isfinite(slice_j).all():
            raise DivergenceError(f"navier-stokes solve diverged before slice {j}")
        out[j] = slice_j
    return GridFunction(out[None], periodic=True)
