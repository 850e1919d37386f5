"""Variable-coefficient elliptic operators and the connection-form system.

An :class:`EllipticOperator` acts componentwise on a spatial one-form
``A[c, ...]`` as

    (L A)_c = g^ij d_i d_j A_c + b_c^j d_j A_c + c_c A_c + (coupling A)_c,

and is inverted by the fixed point ``A <- K(rhs - (L - L0) A)`` where ``L0`` is
the flat discrete Laplacian and ``K`` its exact spectral inverse on zero-mean
fields.
"""

from dataclasses import dataclass

import numpy as np

from .fields import d1, d2, d11, gradient, hessian_magnitude


class EllipticDivergence(RuntimeError):
    """The fixed-point iteration is not a contraction."""


def _grid_bcast(x, f, grid):
    """Reshape a coefficient of grid shape to broadcast against ``f``."""
    return x.reshape((1,) * (f.ndim - grid.d) + grid.shape)


def flat_laplacian(f, grid):
    """Standard (narrow) discrete Laplacian on every leading component."""
    return sum(d11(f, i, i, grid) for i in range(grid.d))


def _symbol(grid):
    ks = [2 * np.pi * np.fft.fftfreq(grid.n[i], d=grid.h[i]) for i in range(grid.d)]
    kk = np.meshgrid(*ks, indexing="ij", sparse=True)
    return -sum((2 * np.sin(0.5 * kk[i] * grid.h[i]) / grid.h[i]) ** 2 for i in range(grid.d))


def flat_inverse(f, grid, return_zero_mode=False):
    """Solve ``L0 u = f`` spectrally on the zero-mean subspace.

    The mean of every component of ``f`` is projected out first.  With
    ``return_zero_mode`` the largest projected mean (times ``sqrt(volume)``,
    i.e. its ``L^2`` size) is returned as well.
    """
    axes = tuple(range(f.ndim - grid.d, f.ndim))
    fh = np.fft.fftn(f, axes=axes)
    sym = _symbol(grid)
    zero = np.zeros(grid.shape, dtype=bool)
    zero[(0,) * grid.d] = True
    mean = np.real(fh[(...,) + (0,) * grid.d]) / np.prod(grid.shape)
    inv = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, sym))
    u = np.real(np.fft.ifftn(fh * inv, axes=axes))
    if return_zero_mode:
        return u, float(np.max(np.abs(mean)) * np.sqrt(grid.volume)) if np.size(mean) else 0.0
    return u


@dataclass
class EllipticOperator:
    """Coefficients of ``L = g^ij d_i d_j + b^j d_j + c`` (plus optional coupling).

    Parameters
    ----------
    ginv : ndarray, shape (d, d, *grid)
    b : ndarray, shape (d, *grid) shared by all components or (m, d, *grid) per component
    c : ndarray, shape grid or (m, *grid)
    grid : GridSpec
    coupling : callable, optional
        Off-diagonal part ``A -> (coupling A)``; same shape in and out.
    """

    ginv: np.ndarray
    b: np.ndarray
    c: np.ndarray
    grid: object
    coupling: object = None

    @classmethod
    def flat(cls, grid):
        d = grid.d
        ginv = np.broadcast_to(np.eye(d).reshape((d, d) + (1,) * d), (d, d) + grid.shape).copy()
        return cls(ginv, np.zeros((d,) + grid.shape), np.zeros(grid.shape), grid)

    def coefficient_norms(self):
        """Sup norms of ``g^ij - delta``, ``b`` and ``c``."""
        d = self.grid.d
        eye = np.eye(d).reshape((d, d) + (1,) * d)
        return {"ginv": float(np.max(np.abs(self.ginv - eye))),
                "b": float(np.max(np.abs(self.b))), "c": float(np.max(np.abs(self.c)))}

    def apply(self, A):
        return apply(self, A)


def apply(opr, A):
    """``L A`` with centered differences (narrow stencil on the diagonal)."""
    grid = opr.grid
    d = grid.d
    out = np.zeros_like(A, dtype=float)
    gi = opr.ginv
    dA = [d1(A, j, grid) for j in range(d)]
    for i in range(d):
        out += _grid_bcast(gi[i, i], A, grid) * d2(A, i, grid)
        for j in range(i + 1, d):
            if np.any(gi[i, j]):
                out += 2 * _grid_bcast(gi[i, j], A, grid) * d1(dA[i], j, grid)
    per_comp_b = opr.b.ndim == d + 2
    per_comp_c = opr.c.ndim == d + 1
    if per_comp_b:
        for k in range(A.shape[0]):
            for j in range(d):
                if np.any(opr.b[k, j]):
                    out[k] += _grid_bcast(opr.b[k, j], A[k], grid) * dA[j][k]
    else:
        for j in range(d):
            out += _grid_bcast(opr.b[j], A, grid) * dA[j]
    if per_comp_c:
        for k in range(A.shape[0]):
            out[k] += _grid_bcast(opr.c[k], A[k], grid) * A[k]
    else:
        out += _grid_bcast(opr.c, A, grid) * A
    if opr.coupling is not None:
        out += opr.coupling(A, dA)
    return out


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    contraction: float
    residual: float
    zero_mode: float
    increments: list


def solve_connection_system(opr, rhs, tol=1e-10, max_iters=200):
    """Fixed-point solve of ``L A = rhs`` with ``A <- K(rhs - (L - L0) A)``.

    The contraction factor is the ratio of the first two increments after the
    initial ``K rhs`` step, ``|A3 - A2| / |A2 - A1|``; a factor of 1 or more
    raises :class:`EllipticDivergence`.  ``zero_mode`` is the mean projected
    out at the last iterate, relative to ``||rhs||``.  Iteration stops when
    ``||L A - rhs|| <= tol ||rhs||`` on the zero-mean subspace, or when the
    increments stop shrinking.
    """
    grid = opr.grid
    rhs_norm = float(np.sqrt(np.sum(rhs ** 2) * grid.cell_volume))
    A = np.zeros_like(rhs, dtype=float)
    if rhs_norm == 0:
        return SolveReport(A, 0, 0.0, 0.0, 0.0, [])
    increments = []
    zero_mode = 0.0
    contraction = 0.0
    residual = np.inf
    axes = tuple(range(rhs.ndim - grid.d, rhs.ndim))
    it = 0
    LA = np.zeros_like(A)
    for it in range(1, max_iters + 1):
        pert = LA - flat_laplacian(A, grid)
        A_new, zm = flat_inverse(rhs - pert, grid, return_zero_mode=True)
        zero_mode = zm / rhs_norm
        inc = float(np.sqrt(np.sum((A_new - A) ** 2) * grid.cell_volume))
        increments.append(inc)
        A = A_new
        if len(increments) == 3 and increments[1] > 0:
            contraction = increments[2] / increments[1]
            if contraction >= 1:
                raise EllipticDivergence(
                    f"fixed-point contraction factor {contraction:.3g} >= 1; metric too far from flat")
        LA = apply(opr, A)
        r = LA - rhs
        r = r - r.mean(axis=axes, keepdims=True)
        residual = float(np.sqrt(np.sum(r ** 2) * grid.cell_volume)) / rhs_norm
        if residual <= tol:
            break
        if len(increments) > 4 and inc >= increments[-2]:
            break
    return SolveReport(A, it, contraction, residual, zero_mode, increments)


# ---------------------------------------------------------------------------
# the connection system

def connection_operator(metric):
    """Operator of the connection-form system, split into diagonal and coupling parts.

    The full left side is

        g^ij d_i d_j A_c - Gamma^k d_c A_k + (d_c g^ij) d_j A_i - (d_c Gamma^k) A_k

    with ``Gamma^k = g^ij Gamma^k_ij``.  Terms acting on ``A_c`` itself form
    ``b_c`` and ``c_c``; the remaining terms make up the coupling.
    """
    grid = metric.grid
    d = grid.d
    gam = metric.contracted_christoffel
    dgam = metric.d_contracted_christoffel  # [c, k]
    dgi = metric.dginv  # [c, i, j]
    b = np.zeros((d, d) + grid.shape)
    c = np.zeros((d,) + grid.shape)
    for k in range(d):
        b[k, k] -= gam[k]
        for j in range(d):
            b[k, j] += dgi[k, k, j]
        c[k] = -dgam[k, k]

    terms = []
    for cc in range(d):
        for k in range(d):
            if k == cc:
                continue
            for coef, slot in ((-gam[k], cc), (-dgam[cc, k], None)):
                if np.any(coef):
                    terms.append((cc, k, coef, slot))
            for j in range(d):
                if np.any(dgi[cc, k, j]):
                    terms.append((cc, k, dgi[cc, k, j], j))

    def coupling(A, dA=None):
        if dA is None:
            dA = [d1(A, j, grid) for j in range(d)]
        out = np.zeros_like(A)
        for cc, k, coef, slot in terms:
            src = A[k] if slot is None else dA[slot][k]
            out[cc] += _grid_bcast(coef, src, grid) * src
        return out

    return EllipticOperator(metric.ginv, b, c, grid, coupling)


def connection_lhs(A, metric):
    """Direct evaluation of the left side of the connection system (all terms at once)."""
    grid = metric.grid
    d = grid.d
    gi = metric.ginv
    gam = metric.contracted_christoffel
    dgam = metric.d_contracted_christoffel
    dgi = metric.dginv
    out = np.zeros_like(A)
    for cc in range(d):
        for i in range(d):
            for j in range(d):
                out[cc] += _grid_bcast(gi[i, j], A[cc], grid) * d11(A[cc], i, j, grid)
        dcA = d1(A, cc, grid)
        for k in range(d):
            out[cc] -= _grid_bcast(gam[k], A[k], grid) * dcA[k]
            out[cc] -= _grid_bcast(dgam[cc, k], A[k], grid) * A[k]
            for j in range(d):
                out[cc] += _grid_bcast(dgi[cc, k, j], A[k], grid) * d1(A[k], j, grid)
    return out


def assemble_connection_rhs(A, F, metric):
    """``g^ij d_j (F_ic - [A_i, A_c])`` for spatial ``A`` (d, 3, 3, ...) and ``F`` (d, d, 3, 3, ...)."""
    grid = metric.grid
    d = grid.d
    AA = np.einsum("ixz...,czy...->icxy...", A, A)
    G = F - (AA - np.swapaxes(AA, 0, 1))
    out = np.zeros_like(A)
    for cc in range(d):
        for i in range(d):
            for j in range(d):
                out[cc] += _grid_bcast(metric.ginv[i, j], G[i, cc], grid) * d1(G[i, cc], j, grid)
    return out


def connection_system_residual(A, F, metric):
    """``L^2`` norm of left minus right side of the connection system, and of the right side."""
    lhs = connection_lhs(A, metric)
    rhs = assemble_connection_rhs(A, F, metric)
    w = metric.volume_weights()
    res = float(np.sqrt(np.sum(np.sum((lhs - rhs) ** 2, axis=(0, 1, 2)) * w)))
    ref = float(np.sqrt(np.sum(np.sum(rhs ** 2, axis=(0, 1, 2)) * w)))
    return res, ref


# ---------------------------------------------------------------------------
# estimate monitor

RATIO_NAMES = ("A_L4/du_H1", "A_W1,8/3/(du_L8*du_H1)", "A_W2,8/5/(du_L8*du_H1)",
               "A_Linf/du_L82^2")


def estimate_monitor(A, du, grid, tiny=1e-300):
    """Ratios of the four connection estimates for spatial ``A`` and spacetime ``du``.

    Returns a dict with the four ratios (NaN and ``applicable = False`` when the
    map is constant) together with the norms that enter them.  Only defined in
    four space dimensions.
    """
    from .analysis import LorentzSpec, lorentz_norm_weighted, lp_norm

    if grid.d != 4:
        raise ValueError("the connection estimates use four-dimensional exponents; need d = 4")
    w = np.full(grid.shape, grid.cell_volume)
    Amag = np.sqrt(np.sum(A * A, axis=tuple(range(A.ndim - grid.d))))
    dA = gradient(A, grid)
    dAmag = np.sqrt(np.sum(dA * dA, axis=tuple(range(dA.ndim - grid.d))))
    ddAmag = hessian_magnitude(A, grid)
    dumag = np.sqrt(np.sum(du * du, axis=tuple(range(du.ndim - grid.d))))
    ddu = gradient(du, grid)
    norms = {
        "A_L4": lp_norm(Amag, 4, w),
        "A_W1,8/3": lp_norm(dAmag, 8 / 3, w),
        "A_W2,8/5": lp_norm(ddAmag, 8 / 5, w),
        "A_Linf": float(np.max(Amag)),
        "du_H1": float(np.sqrt(np.sum(ddu * ddu) * grid.cell_volume)),
        "du_L8": lp_norm(dumag, 8, w),
        "du_L82": lorentz_norm_weighted(dumag, LorentzSpec(8, 2), w),
    }
    applicable = norms["du_H1"] > tiny and norms["du_L8"] > tiny
    if not applicable:
        ratios = [float("nan")] * 4
    else:
        prod = norms["du_L8"] * norms["du_H1"]
        ratios = [norms["A_L4"] / norms["du_H1"], norms["A_W1,8/3"] / prod,
                  norms["A_W2,8/5"] / prod, norms["A_Linf"] / norms["du_L82"] ** 2]
    out = dict(zip(RATIO_NAMES, ratios))
    out["applicable"] = applicable
    out["norms"] = norms
    return out
