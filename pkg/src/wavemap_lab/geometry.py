"""Riemannian metrics on the periodic box and the operators they induce.

A metric is a compactly supported perturbation of the identity,
``g = I + (bump-shaped term)``, built from one of a small library of profiles.
"""

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fields import GridSpec, d1, d11, gradient, hessian


BUMP_POWER = 8


def bump(r, power=BUMP_POWER):
    """Compact radial bump ``(1 - r^2)^power`` on ``r < 1``, zero outside; ``bump(0) = 1``.

    The profile is ``C^(power - 1)``; its derivatives stay moderate near the
    edge of the support, so modest grids resolve it.
    """
    r = np.asarray(r, dtype=float)
    return np.where(r < 1, np.clip(1.0 - r * r, 0.0, None) ** power, 0.0)


# symmetric direction used by the general profile; largest entry is 1
_GENERAL_DIRECTION = np.array([
    [1.0, 0.5, -0.25, 0.3],
    [0.5, -0.6, 0.4, -0.2],
    [-0.25, 0.4, 0.8, 0.35],
    [0.3, -0.2, 0.35, -0.45],
])


@dataclass(frozen=True)
class MetricProfile:
    """Parameters of a bump-shaped metric perturbation.

    ``kind`` is ``"flat"``, ``"conformal"`` (``g = exp(2 eps b) I``) or
    ``"general"`` (``g = I + eps b M`` with a fixed symmetric ``M``, ``max|M| = 1``).
    ``radius`` is the support radius of the bump ``b``; ``center`` defaults to
    the middle of the box.
    """

    kind: str = "conformal"
    amplitude: float = 0.01
    radius: float = 2.4
    center: tuple = None

    def __post_init__(self):
        if self.kind not in ("flat", "conformal", "general"):
            raise ValueError(f"unknown metric profile {self.kind!r}")

    @property
    def sup_constant(self):
        """``C`` in ``max|g - I| <= C * eps`` for this family."""
        eps = abs(self.amplitude)
        if self.kind == "flat" or eps == 0:
            return 0.0
        if self.kind == "conformal":
            return float(np.expm1(2 * eps) / eps)
        return 1.0


class MetricField:
    """Metric tensor sampled on a grid, with cached derived quantities.

    Attributes
    ----------
    g, ginv : ndarray, shape (d, d, *grid)
    sqrt_det : ndarray, shape grid
    """

    def __init__(self, g, grid, profile=None):
        self.grid = grid
        self.g = np.asarray(g, dtype=float)
        self.profile = profile
        d = grid.d
        if self.g.shape != (d, d) + grid.shape:
            raise ValueError("metric array has the wrong shape")
        if not np.allclose(self.g, np.swapaxes(self.g, 0, 1), atol=0, rtol=0):
            raise ValueError("metric is not symmetric")
        gm = np.moveaxis(self.g, (0, 1), (-2, -1))
        eig_min = np.linalg.eigvalsh(gm)[..., 0]
        if np.min(eig_min) <= 0:
            idx = np.unravel_index(np.argmin(eig_min), eig_min.shape)
            raise ValueError(f"metric is not positive definite at grid point {tuple(int(i) for i in idx)}")
        self.ginv = np.moveaxis(np.linalg.inv(gm), (-2, -1), (0, 1)).copy()
        self.ginv = 0.5 * (self.ginv + np.swapaxes(self.ginv, 0, 1))
        self.sqrt_det = np.sqrt(np.linalg.det(gm))
        eye = np.eye(d).reshape((d, d) + (1,) * d)
        self.is_flat = bool(np.all(self.g == eye))

    @property
    def d(self):
        return self.grid.d

    def volume_weights(self):
        """Riemannian cell volumes ``sqrt(g) h^d``."""
        return self.sqrt_det * self.grid.cell_volume

    @cached_property
    def dg(self):
        """``dg[m, i, j] = d_m g_ij``."""
        return gradient(self.g, self.grid)

    @cached_property
    def christoffel(self):
        """``Gamma[k, i, j] = Gamma^k_ij``, shape (d, d, d, *grid)."""
        if self.is_flat:
            return np.zeros((self.d,) * 3 + self.grid.shape)
        dg = self.dg
        lower = 0.5 * (np.swapaxes(dg, 0, 1) + np.transpose(dg, (1, 2, 0) + tuple(range(3, dg.ndim)))
                       - dg)
        # lower[m, i, j] = 1/2 (d_i g_mj + d_j g_mi - d_m g_ij)
        return np.einsum("km...,mij...->kij...", self.ginv, lower)

    @cached_property
    def contracted_christoffel(self):
        """``g^ij Gamma^k_ij``, shape (d, *grid)."""
        return np.einsum("ij...,kij...->k...", self.ginv, self.christoffel)

    @cached_property
    def d_contracted_christoffel(self):
        """``[c, k] = d_c (g^ij Gamma^k_ij)``."""
        return gradient(self.contracted_christoffel, self.grid)

    @cached_property
    def dginv(self):
        """``[c, i, j] = d_c g^ij``."""
        return gradient(self.ginv, self.grid)

    def deviation_sup(self):
        d = self.d
        eye = np.eye(d).reshape((d, d) + (1,) * d)
        return float(np.max(np.abs(self.g - eye)))

    def dump(self, path):
        """Binary array plus JSON header with grid, profile and shape."""
        base = str(path)
        if base.endswith(".bin"):
            base = base[:-4]
        np.ascontiguousarray(self.g, dtype="<f8").tofile(base + ".bin")
        header = {
            "schema_version": 1, "kind": "metric", "shape": list(self.g.shape),
            "dtype": "<f8", "order": "C", "d": self.d, "n": list(self.grid.n),
            "length": list(self.grid.length), "spacing": list(self.grid.h),
        }
        if self.profile is not None:
            header["profile"] = {"kind": self.profile.kind, "amplitude": self.profile.amplitude,
                                 "radius": self.profile.radius,
                                 "center": None if self.profile.center is None
                                 else list(self.profile.center)}
        with open(base + ".json", "w") as fh:
            json.dump(header, fh, indent=2)
        return base + ".bin", base + ".json"

    @classmethod
    def load(cls, path):
        base = str(path)
        for ext in (".bin", ".json"):
            if base.endswith(ext):
                base = base[: -len(ext)]
        with open(base + ".json") as fh:
            header = json.load(fh)
        g = np.fromfile(base + ".bin", dtype=header["dtype"]).reshape(header["shape"])
        grid = GridSpec(header["d"], tuple(header["n"]), tuple(header["length"]))
        prof = header.get("profile")
        profile = None
        if prof is not None:
            center = None if prof["center"] is None else tuple(prof["center"])
            profile = MetricProfile(prof["kind"], prof["amplitude"], prof["radius"], center)
        return cls(g, grid, profile)


def bump_field(grid, radius, center=None):
    """Radial bump of the given support radius sampled on the grid."""
    c = grid.center if center is None else np.asarray(center, dtype=float)
    x = grid.coords()
    r = np.sqrt(sum((x[i] - c[i]) ** 2 for i in range(grid.d)))
    return bump(r / radius)


def build_metric(grid, profile=None):
    """Sample a metric profile on a grid.

    The bump support must stay away from the box boundary (radius at most 40%
    of the smallest side, measured from the center) and must be resolved by at
    least 8 cells across its diameter.
    """
    if profile is None:
        profile = MetricProfile("flat", 0.0)
    d = grid.d
    eye = np.eye(d).reshape((d, d) + (1,) * d)
    if profile.kind == "flat" or profile.amplitude == 0:
        g = np.broadcast_to(eye, (d, d) + grid.shape).copy()
        return MetricField(g, grid, profile)
    c = grid.center if profile.center is None else np.asarray(profile.center, dtype=float)
    margin = min(min(c[i], grid.length[i] - c[i]) for i in range(d))
    if profile.radius > 0.9 * margin or profile.radius > 0.4 * min(grid.length):
        raise ValueError("metric bump support is too close to the box boundary")
    if 2 * profile.radius / max(grid.h) < 8:
        raise ValueError("metric bump is resolved by fewer than 8 cells")
    b = bump_field(grid, profile.radius, c)
    eps = profile.amplitude
    if profile.kind == "conformal":
        g = np.exp(2 * eps * b) * eye
    else:
        M = _GENERAL_DIRECTION[:d, :d].reshape((d, d) + (1,) * d)
        g = eye + eps * b * M
    return MetricField(g, grid, profile)


def asymptotic_flatness_sum(metric, center=None):
    """Dyadic-shell sum of ``sup (|x|^2 |d^2 g| + |x| |d g| + |g - I|)``.

    ``x`` is measured from ``center`` (the bump center by default). Norms are the
    maximum over tensor components. Shell ``j`` holds ``2^j <= |x| < 2^(j+1)``.
    """
    grid = metric.grid
    d = grid.d
    if center is None:
        prof = metric.profile
        center = grid.center if prof is None or prof.center is None else prof.center
    c = np.asarray(center, dtype=float)
    x = grid.coords()
    r = np.sqrt(sum((x[i] - c[i]) ** 2 for i in range(d)))
    eye = np.eye(d).reshape((d, d) + (1,) * d)
    dev = np.max(np.abs(metric.g - eye).reshape(d * d, -1), axis=0).reshape(grid.shape)
    dg = np.max(np.abs(metric.dg).reshape(-1, *grid.shape), axis=0)
    ddg = np.zeros(grid.shape)
    for m in range(d):
        for n in range(m, d):
            ddg = np.maximum(ddg, np.max(np.abs(d11(metric.g, m, n, grid)).reshape(-1, *grid.shape),
                                         axis=0))
    term = r ** 2 * ddg + r * dg + dev
    pos = r > 0
    shells = np.floor(np.log2(r[pos])).astype(int)
    total = 0.0
    for j in np.unique(shells):
        total += float(np.max(term[pos][shells == j]))
    return total


# ---------------------------------------------------------------------------
# operators

def _dplus(f, i, grid):
    ax = f.ndim - grid.d + i
    return (np.roll(f, -1, ax) - f) / grid.h[i]


def _dminus(f, i, grid):
    ax = f.ndim - grid.d + i
    return (f - np.roll(f, 1, ax)) / grid.h[i]


def laplace_beltrami(metric, f):
    """Divergence-form ``|g|^{-1/2} d_i(|g|^{1/2} g^ij d_j f)`` on each leading component.

    The stencil averages the two one-sided pairings ``D-_i(a D+_j)`` and
    ``D+_i(a D-_j)`` with ``a = sqrt(g) g^ij``.  This is second order, reduces
    exactly to the standard Laplacian when flat, and is the gradient of the
    discrete Dirichlet energy used by :func:`dirichlet_density`, which makes
    the semi-discrete wave map flow conservative.
    """
    grid = metric.grid
    d = grid.d
    if metric.is_flat:
        return sum(_dminus(_dplus(f, i, grid), i, grid) for i in range(d))
    a = metric.ginv * metric.sqrt_det
    fp = [_dplus(f, j, grid) for j in range(d)]
    fm = [_dminus(f, j, grid) for j in range(d)]
    out = np.zeros_like(f, dtype=float)
    for i in range(d):
        flux_p = sum(a[i, j] * fp[j] for j in range(d))
        flux_m = sum(a[i, j] * fm[j] for j in range(d))
        out += _dminus(flux_p, i, grid) + _dplus(flux_m, i, grid)
    return out / (2 * metric.sqrt_det)


def dirichlet_density(metric, f):
    """Pointwise ``g^ij <d_i f, d_j f>`` averaged over forward and backward differences.

    Leading axes of ``f`` are summed; the result has the grid shape.
    """
    grid = metric.grid
    d = grid.d
    vals = tuple(range(f.ndim - d))
    out = np.zeros(grid.shape)
    for diff in (_dplus, _dminus):
        df = [diff(f, j, grid) for j in range(d)]
        for i in range(d):
            for j in range(i, d):
                if metric.is_flat and i != j:
                    continue
                w = 1.0 if i == j else 2.0
                out += w * metric.ginv[i, j] * np.sum(df[i] * df[j], axis=vals)
    return 0.5 * out


def laplace_beltrami_nondivergence(metric, f):
    """``g^ij d_i d_j f - g^ij Gamma^k_ij d_k f`` with centered differences."""
    grid = metric.grid
    d = grid.d
    gi = metric.ginv
    out = np.zeros_like(f, dtype=float)
    for i in range(d):
        out += gi[i, i] * d11(f, i, i, grid)
        for j in range(i + 1, d):
            out += 2 * gi[i, j] * d11(f, i, j, grid)
    gam = metric.contracted_christoffel
    for k in range(d):
        out -= gam[k] * d1(f, k, grid)
    return out


def codifferential(metric, omega):
    """Codifferential of a spatial one-form, ``delta w = -(g^ij d_i w_j - g^ij Gamma^k_ij w_k)``.

    ``omega`` has shape ``(d, *values, *grid)``; the result drops the form index.
    """
    grid = metric.grid
    d = grid.d
    out = np.zeros(omega.shape[1:])
    gi = metric.ginv
    for i in range(d):
        for j in range(d):
            if metric.is_flat and i != j:
                continue
            out += gi[i, j] * d1(omega[j], i, grid)
    if not metric.is_flat:
        gam = metric.contracted_christoffel
        for k in range(d):
            out -= gam[k] * omega[k]
    return -out


def codifferential_divergence(metric, omega):
    """Divergence form ``-|g|^{-1/2} d_i(|g|^{1/2} g^ij w_j)`` of the codifferential."""
    grid = metric.grid
    s = metric.sqrt_det
    flux = np.einsum("ij...,j...->i...", metric.ginv, omega) * s
    return -sum(d1(flux[i], i, grid) for i in range(grid.d)) / s


def codifferential_twoform(metric, beta):
    """``(delta b)_c = -g_ck |g|^{-1/2} d_i(|g|^{1/2} g^ia g^kb b_ab)`` for a spatial two-form."""
    grid = metric.grid
    gi = metric.ginv
    s = metric.sqrt_det
    raised = np.einsum("ia...,kb...,ab...->ik...", gi, gi, beta) * s
    div = sum(d1(raised[i], i, grid) for i in range(grid.d)) / s
    return -np.einsum("ck...,k...->c...", metric.g, div)


def hodge_laplacian_oneform(metric, omega):
    """Hodge Laplacian ``d delta + delta d`` on a spatial one-form, coordinate form.

    ``(Delta w)_c = -Lap_g w_c + 2 g^ij Gamma^k_jc d_i w_k + d_c(g^ij Gamma^k_ij) w_k``
    where ``Lap_g`` acts componentwise.
    """
    grid = metric.grid
    d = grid.d
    out = np.stack([-laplace_beltrami(metric, omega[c]) for c in range(d)])
    if metric.is_flat:
        return out
    G = metric.christoffel
    # T[i, k, c] = g^ij Gamma^k_jc
    T = np.einsum("ij...,kjc...->ikc...", metric.ginv, G)
    dgam = metric.d_contracted_christoffel
    extra = (1,) * (omega.ndim - 1 - d)
    for i in range(d):
        dw = d1(omega, i, grid)
        for c in range(d):
            for k in range(d):
                out[c] += 2 * T[i, k, c].reshape(extra + grid.shape) * dw[k]
    for c in range(d):
        for k in range(d):
            out[c] += dgam[c, k].reshape(extra + grid.shape) * omega[k]
    return out


def hodge_laplacian_composed(metric, omega):
    """``d delta w + delta d w`` assembled from the first-order operators."""
    grid = metric.grid
    dw = gradient(omega, grid)  # dw[i, j] = d_i w_j
    beta = dw - np.swapaxes(dw, 0, 1)
    return gradient(codifferential_divergence(metric, omega), grid) + codifferential_twoform(metric, beta)


def christoffel_cancellation(metric, A, q):
    """Pointwise ``(d_c g^ij) A_i q_j + g^ij A_i Gamma^s_jc q_s + g^ij Gamma^s_jc A_s q_j``.

    ``A`` has shape ``(d, 3, 3, *grid)`` and ``q`` has shape ``(d, 3, *grid)``.
    The combination vanishes identically for a metric-compatible connection;
    the return value (shape ``(d, 3, *grid)``) measures its discrete size.
    """
    dgi = metric.dginv
    G = metric.christoffel
    gi = metric.ginv
    t1 = np.einsum("cij...,iab...,jb...->ca...", dgi, A, q)
    Gq = np.einsum("sjc...,sb...->jcb...", G, q)  # Gamma^s_jc q_s
    t2 = np.einsum("ij...,iab...,jcb...->ca...", gi, A, Gq)
    GA = np.einsum("sjc...,sab...->jcab...", G, A)  # Gamma^s_jc A_s
    t3 = np.einsum("ij...,jcab...,ib...->ca...", gi, GA, q)
    return t1 + t2 + t3
