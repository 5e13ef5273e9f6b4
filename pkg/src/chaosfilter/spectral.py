"""Galerkin-truncated incompressible flow on a periodic square, in spectral form.

States are complex scalar coefficients over a representative half of the
wavevector lattice ``0 < |n|_inf <= k_max``: writing the velocity Fourier
coefficient as ``v_k = v'_k k_perp / |k|`` makes the field divergence-free
by construction, and storing one scalar per +/-k pair makes it real-valued
by construction. The advection term is evaluated as an exact convolution
over the truncated lattice (no dealiasing needed at this scale), and time
stepping uses RK4 on integrating-factor-transformed coefficients so the
stiff viscous part is handled exactly.
"""

import numpy as np

from . import _kernels
from .dynamics import BlowUpError

TWO_PI = 2.0 * np.pi


class SpectralGrid:
    """Wavevector bookkeeping and convolution tables for one truncation."""

    def __init__(self, k_max, period=TWO_PI):
        self.k_max = int(k_max)
        self.period = float(period)
        self.scale = TWO_PI / self.period  # physical k = scale * n

        reps = []
        for n1 in range(0, self.k_max + 1):
            for n2 in range(-self.k_max, self.k_max + 1):
                if n1 == 0 and n2 <= 0:
                    continue
                reps.append((n1, n2))
        self.reps = np.array(reps, dtype=np.int64)
        self.n_reps = len(reps)
        self.full = np.vstack([self.reps, -self.reps])
        self.n_full = 2 * self.n_reps
        self._lookup = {tuple(n): i for i, n in enumerate(self.full)}

        kv = self.scale * self.full.astype(float)
        self.kvecs = kv
        self.k2_full = np.einsum("ij,ij->i", kv, kv)
        self.k2_reps = self.k2_full[: self.n_reps]

        self._build_conv_tables()

    def _build_conv_tables(self):
        # entries for out[k] = sum_{p+q=k} gamma(p,q) u'_p u'_q, k a representative
        rows, pcols, qcols, weights = [], [], [], []
        kmax = self.k_max
        for ki in range(self.n_reps):
            nk = self.full[ki]
            k = self.kvecs[ki]
            nrm_k = np.sqrt(self.k2_full[ki])
            for pi in range(self.n_full):
                nq = nk - self.full[pi]
                if nq[0] == 0 and nq[1] == 0:
                    continue
                if abs(nq[0]) > kmax or abs(nq[1]) > kmax:
                    continue
                qi = self._lookup[(nq[0], nq[1])]
                p, q = self.kvecs[pi], self.kvecs[qi]
                cross = p[0] * q[1] - p[1] * q[0]
                if cross == 0.0:
                    continue
                w = (
                    0.5j
                    * cross
                    * (self.k2_full[qi] - self.k2_full[pi])
                    / (np.sqrt(self.k2_full[pi]) * np.sqrt(self.k2_full[qi]) * nrm_k)
                )
                rows.append(ki)
                pcols.append(pi)
                qcols.append(qi)
                weights.append(w)
        self.conv_rows = np.array(rows, dtype=np.int64)
        self.conv_p = np.array(pcols, dtype=np.int64)
        self.conv_q = np.array(qcols, dtype=np.int64)
        self.conv_w = np.array(weights, dtype=np.complex128)
        counts = np.bincount(self.conv_rows, minlength=self.n_reps)
        self.conv_row_ptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

    # -- representation helpers ------------------------------------------------

    def expand(self, reps_coeffs):
        """Representative scalars -> full-lattice scalars (real field implied)."""
        return np.concatenate([reps_coeffs, -np.conj(reps_coeffs)])

    def index_of(self, n):
        return self._lookup[tuple(int(v) for v in n)]

    def h1_norm2(self, reps_coeffs):
        """Squared Sobolev norm sum_k |k|^2 |v_k|^2 over the full lattice."""
        return 2.0 * float(np.sum(self.k2_reps * np.abs(reps_coeffs) ** 2))

    def velocity_coeffs(self, reps_coeffs):
        """Full-lattice vector coefficients v_k = v'_k k_perp/|k|, shape (n_full, 2)."""
        full = self.expand(reps_coeffs)
        kperp = np.stack([-self.kvecs[:, 1], self.kvecs[:, 0]], axis=1)
        unit = kperp / np.sqrt(self.k2_full)[:, None]
        return full[:, None] * unit

    def evaluate_velocity(self, reps_coeffs, points):
        """Velocity field at physical points, shape (npts, 2) complex."""
        coeffs = self.velocity_coeffs(reps_coeffs)
        phases = np.exp(1j * points @ self.kvecs.T)  # (npts, n_full)
        return phases @ coeffs


class SpectralNSModel:
    """Viscous incompressible flow truncated to ``0 < |n|_inf <= k_max``."""

    def __init__(self, nu, forcing_reps, grid: SpectralGrid, substeps=5):
        self.name = f"navier-stokes-k{grid.k_max}"
        self.grid = grid
        self.nu = float(nu)
        self.forcing = np.asarray(forcing_reps, dtype=np.complex128)
        if self.forcing.shape != (grid.n_reps,):
            raise ValueError("forcing must be a representative coefficient array")
        self.dim = grid.n_reps
        self.substeps = int(substeps)
        # slowest dissipation rate in the truncated space
        self.theta = self.nu * grid.scale**2
        fnorm = np.sqrt(grid.h1_norm2(self.forcing))
        self.r0 = (fnorm / self.theta) ** 2
        self.r1 = self.theta

    # -- algebra ----------------------------------------------------------------

    def _conv_full(self, u_full, v_full):
        g = self.grid
        if _kernels.NUMBA_ENABLED:
            out_reps = _kernels.bilinear_conv(
                u_full, v_full, g.conv_row_ptr, g.conv_p, g.conv_q, g.conv_w
            )
        else:
            out_reps = _kernels.bilinear_conv(
                u_full, v_full, g.conv_rows, g.conv_p, g.conv_q, g.conv_w, g.n_reps
            )
        return out_reps

    def bilinear(self, u_reps, w_reps):
        """Symmetric advection form B(u, w), representative coefficients."""
        uf = self.grid.expand(np.asarray(u_reps, dtype=np.complex128))
        wf = self.grid.expand(np.asarray(w_reps, dtype=np.complex128))
        buw = self._conv_full(uf, wf)
        bwu = self._conv_full(wf, uf)
        return 0.5 * (buw + bwu)

    def vector_field(self, u_reps):
        """Right-hand side f - A u - B(u, u) in representative coefficients."""
        u_reps = np.asarray(u_reps, dtype=np.complex128)
        if u_reps.shape != (self.dim,):
            raise ValueError(
                f"state has shape {u_reps.shape}, model {self.name!r} expects ({self.dim},)"
            )
        uf = self.grid.expand(u_reps)
        buu = self._conv_full(uf, uf)
        return self.forcing - self.nu * self.grid.k2_reps * u_reps - buu

    # -- time stepping ------------------------------------------------------------

    def _nonlinear(self, u_reps):
        uf = self.grid.expand(u_reps)
        return self.forcing - self._conv_full(uf, uf)

    def step(self, u, h, substeps=None):
        """One assimilation interval via integrating-factor RK4."""
        if h <= 0:
            raise ValueError("assimilation interval h must be positive")
        u = np.asarray(u, dtype=np.complex128).copy()
        nsub = self.substeps if substeps is None else int(substeps)
        dt = h / nsub
        decay = np.exp(-self.nu * self.grid.k2_reps * (dt / 2.0))
        decay2 = decay * decay
        for _ in range(nsub):
            g0 = self._nonlinear(u)
            ua = decay * (u + 0.5 * dt * g0)
            ga = self._nonlinear(ua)
            ub = decay * u + 0.5 * dt * ga
            gb = self._nonlinear(ub)
            uc = decay2 * u + dt * decay * gb
            gc = self._nonlinear(uc)
            u = decay2 * u + (dt / 6.0) * (decay2 * g0 + 2.0 * decay * (ga + gb) + gc)
        if not np.isfinite(u).all():
            raise BlowUpError(
                f"model {self.name!r}: non-finite state after step of h={h}"
            )
        return u

    def step_batch(self, states, h, substeps=None):
        states = np.asarray(states, dtype=np.complex128)
        return np.stack([self.step(s, h, substeps=substeps) for s in states])

    def __repr__(self):
        return f"SpectralNSModel(k_max={self.grid.k_max}, nu={self.nu})"


def _forcing_from_dict(grid, spec):
    """Scalar forcing dict {(n1, n2): coeff} -> representative array.

    Keys may address either lattice half; the conjugate partner is implied.
    """
    out = np.zeros(grid.n_reps, dtype=np.complex128)
    for n, val in spec.items():
        if tuple(n) == (0, 0):
            raise ValueError("forcing must have zero mean: mode (0, 0) not allowed")
        idx = grid.index_of(n)
        if idx < grid.n_reps:
            out[idx] = complex(val)
        else:
            out[idx - grid.n_reps] = -np.conj(complex(val))
    return out


def forcing_from_velocity(grid, spec):
    """Vector forcing dict {(n1, n2): (f1, f2)} -> representative scalars.

    Each coefficient must be orthogonal to its wavevector (divergence-free)
    and the zero mode is rejected.
    """
    scalars = {}
    for n, vec in spec.items():
        if tuple(n) == (0, 0):
            raise ValueError("forcing must have zero mean: mode (0, 0) not allowed")
        idx = grid.index_of(n)
        k = grid.kvecs[idx]
        vec = np.asarray(vec, dtype=np.complex128)
        div = k[0] * vec[0] + k[1] * vec[1]
        if abs(div) > 1e-12 * (1.0 + np.linalg.norm(vec)):
            raise ValueError(f"forcing mode {tuple(n)} is not divergence-free")
        kperp = np.array([-k[1], k[0]]) / np.sqrt(k @ k)
        scalars[tuple(n)] = complex(kperp[0] * vec[0] + kperp[1] * vec[1])
    return _forcing_from_dict(grid, scalars)


def navier_stokes_spectral(nu, forcing, k_max, period=TWO_PI, substeps=5) -> SpectralNSModel:
    """Build the truncated spectral model.

    ``forcing`` may be a representative-coefficient array, a scalar dict
    ``{(n1, n2): coeff}``, or a vector dict ``{(n1, n2): (f1, f2)}`` (the
    latter is validated to be divergence-free).
    """
    grid = SpectralGrid(k_max, period)
    if isinstance(forcing, dict):
        first = next(iter(forcing.values()), 0.0)
        if np.ndim(first) > 0:
            reps = forcing_from_velocity(grid, forcing)
        else:
            reps = _forcing_from_dict(grid, forcing)
    else:
        reps = np.asarray(forcing, dtype=np.complex128)
    return SpectralNSModel(nu, reps, grid, substeps=substeps)
