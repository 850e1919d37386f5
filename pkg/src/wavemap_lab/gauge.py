"""Orthonormal frames along a map, their connection forms and the Coulomb gauge.

Frames are arrays of shape ``(3, 4, *grid)``: ``e[a]`` is the ``a``-th tangent
vector in ambient coordinates.  Rotation fields ``B`` have shape
``(3, 3, *grid)`` and act by ``e'_a = sum_b B[b, a] e_b``.

The discrete spatial connection is built from the link matrices
``M_i(x)[b, a] = <e_b(x), e_a(x + h_i)>``:

    A_i(x) = asym(M_i(x) + M_i(x - h_i)) / (2 h_i),

which is the centered difference ``<e_a(x+h) - e_a(x-h), e_b(x)> / 2h`` made
exactly antisymmetric.  The Coulomb gauge minimises the compact functional

    Lambda = sum_x sqrt(g) h^d 1/2 g^ij (<a+_i, a+_j> + <a-_i, a-_j>),
    a+_i(x) = asym(M_i(x)) / h_i,   a-_i(x) = a+_i(x - h_i),

over pointwise rotations, using its exact discrete gradient; the reported
Euler-Lagrange residual is that gradient scaled to a pointwise ``delta A``.
"""

from dataclasses import dataclass, field

import numpy as np

from .fields import d1, exterior_d, commutator_form, express_in_frame, second_time_derivative
from .fields import time_derivative, wedge
from .geometry import codifferential, hodge_laplacian_oneform, laplace_beltrami
from .target import global_frame, riemann


# ---------------------------------------------------------------------------
# so(3) helpers

def hat(w):
    """Antisymmetric matrix of a vector field, ``hat(w) v = w x v``; shape (3, 3, ...)."""
    z = np.zeros_like(w[0])
    return np.array([[z, -w[2], w[1]], [w[2], z, -w[0]], [-w[1], w[0], z]])


def vee(X):
    """Inverse of :func:`hat` applied to the antisymmetric part of ``X``."""
    return 0.5 * np.array([X[2, 1] - X[1, 2], X[0, 2] - X[2, 0], X[1, 0] - X[0, 1]])


def _asym_mat(X, lead=0):
    """Antisymmetric part of matrices stored on axes ``lead, lead + 1``."""
    return 0.5 * (X - np.swapaxes(X, lead, lead + 1))


def expm_so3(w):
    """Rodrigues formula for ``exp(hat(w))``, vectorised over trailing axes."""
    theta2 = np.sum(w * w, axis=0)
    theta = np.sqrt(theta2)
    small = theta2 < 1e-12
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1 - theta2 / 6, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24, (1 - np.cos(safe)) / safe ** 2)
    W = hat(w)
    W2 = np.einsum("ik...,kj...->ij...", W, W)
    eye = np.eye(3).reshape((3, 3) + (1,) * (w.ndim - 1))
    return eye + a * W + b * W2


def matmul_field(X, Y):
    return np.einsum("ik...,kj...->ij...", X, Y)


def rotate_frame(frame, B):
    """``e'_a = sum_b B[b, a] e_b``."""
    return np.einsum("ba...,bk...->ak...", B, frame)


# ---------------------------------------------------------------------------
# frames and connection forms

def pullback_frame(u):
    """Frame obtained by composing the quaternion frame of S^3 with ``u``."""
    return global_frame(u)


def links(frame, grid):
    """``M[i, b, a] = <e_b(x), e_a(x + h_i)>``, shape (d, 3, 3, *grid)."""
    out = np.empty((grid.d, 3, 3) + grid.shape)
    for i in range(grid.d):
        ax = frame.ndim - grid.d + i
        out[i] = np.einsum("bk...,ak...->ba...", frame, np.roll(frame, -1, ax))
    return out


def _ahat_from_links(M, grid):
    A = np.empty_like(M)
    for i in range(grid.d):
        a = _asym_mat(M[i])
        A[i] = (a + np.roll(a, 1, a.ndim - grid.d + i)) / (2 * grid.h[i])
    return A


def spatial_connection(frame, grid):
    """Spatial connection coefficients ``A[i, b, a]``, exactly antisymmetric."""
    return _ahat_from_links(links(frame, grid), grid)


def temporal_connection(frame_prev, frame, frame_next, dt):
    """``A_0[b, a] = <e_a(t+dt) - e_a(t-dt), e_b(t)> / 2dt``, antisymmetrised."""
    X = np.einsum("bk...,ak...->ba...", frame, frame_next - frame_prev) / (2 * dt)
    return _asym_mat(X)


def connection_form(frames, dt, grid):
    """Spacetime connection at the middle of three consecutive frames.

    ``frames`` is a sequence ``(e(t - dt), e(t), e(t + dt))``; returns
    ``A[alpha, b, a]`` with shape ``(d + 1, 3, 3, *grid)``.
    """
    ep, e, en = frames
    return np.concatenate([temporal_connection(ep, e, en, dt)[None], spatial_connection(e, grid)])


def gauge_transform(A, B, dB):
    """Transformed connection ``B^-1 dB + B^-1 A B`` for a rotation field.

    ``A`` has shape ``(D, 3, 3, ...)``, ``B`` ``(3, 3, ...)`` and ``dB`` ``(D, 3, 3, ...)``.
    """
    Bt = np.swapaxes(B, 0, 1)
    out = np.einsum("ij...,ajk...->aik...", Bt, dB)
    out += np.einsum("ij...,ajk...,kl...->ail...", Bt, A, B)
    return out


def frame_components(du, u, frame, tol=1e-6):
    """``q[alpha, a] = <d_alpha u, e_a>``."""
    return express_in_frame(du, u, frame, tol)


def curvature(u, du, frame):
    """``F[alpha, beta, b, a] = <R(d_alpha u, d_beta u) e_a, e_b>`` from the target curvature.

    Assembled directly from :func:`riemann`, independently of any connection.
    """
    D = du.shape[0]
    Z = np.moveaxis(frame, 0, 1)  # (4, 3, *grid)
    F = np.zeros((D, D, 3, 3) + u.shape[1:])
    for al in range(D):
        X = du[al][:, None]
        for be in range(al + 1, D):
            R = riemann(u, X, du[be][:, None], Z)  # (4, 3, *grid) : R(X,Y) e_a
            F[al, be] = np.einsum("ka...,bk...->ba...", R, frame)
            F[be, al] = -F[al, be]
    return F


# ---------------------------------------------------------------------------
# norms

def l2_norm(x, metric, lead=1):
    """``L^2`` norm with Riemannian weights; ``lead`` leading axes are summed pointwise."""
    axes = tuple(range(x.ndim - metric.d))
    return float(np.sqrt(np.sum(np.sum(x * x, axis=axes) * metric.volume_weights())))


def _pairs_norm(T, metric):
    """Norm of a two-form stored with full ``(D, D, ...)`` over the pairs ``a < b``."""
    D = T.shape[0]
    tot = 0.0
    for a in range(D):
        for b in range(a + 1, D):
            tot += l2_norm(T[a, b], metric) ** 2
    return float(np.sqrt(tot))


# ---------------------------------------------------------------------------
# Coulomb gauge

def _link_differences(M, grid):
    """Forward and backward one-sided connection coefficients ``asym(M_i) / h_i``."""
    ap = np.empty_like(M)
    am = np.empty_like(M)
    for i in range(grid.d):
        ap[i] = _asym_mat(M[i]) / grid.h[i]
        am[i] = np.roll(ap[i], 1, ap[i].ndim - grid.d + i)
    return ap, am


def _pair_density(metric, X, Y):
    if metric.is_flat:
        return np.sum(X * Y, axis=(0, 1, 2))
    return np.einsum("ij...,iab...,jab...->...", metric.ginv, X, Y)


def coulomb_functional(frame, metric):
    """Discrete ``Lambda = int g^ij <A_i, A_j> dvol`` over pointwise rotations.

    Uses the one-sided link coefficients ``asym(M_i(x)) / h_i`` and
    ``asym(M_i(x - h_i)) / h_i``, averaging the two pairings like the
    discrete Dirichlet energy.  The compact stencil has no checkerboard null
    directions, so the minimiser is unique up to a constant rotation.
    """
    ap, am = _link_differences(links(frame, metric.grid), metric.grid)
    dens = 0.5 * (_pair_density(metric, ap, ap) + _pair_density(metric, am, am))
    return float(np.sum(dens * metric.volume_weights()))


def _gradient(frame, metric):
    """Exact gradient of :func:`coulomb_functional` under right rotations ``e -> e exp(xi)``.

    Returns ``(Lambda, G)`` where ``G`` is antisymmetric with
    ``d Lambda = sum_x <G(x), xi(x)>_F``.
    """
    grid = metric.grid
    M = links(frame, grid)
    ap, am = _link_differences(M, grid)
    vw = metric.volume_weights()
    dens = 0.5 * (_pair_density(metric, ap, ap) + _pair_density(metric, am, am))
    lam = float(np.sum(dens * vw))
    if metric.is_flat:
        Wp, Wm = ap * vw, am * vw
    else:
        w = metric.ginv * vw
        Wp = np.einsum("ij...,jab...->iab...", w, ap)
        Wm = np.einsum("ij...,jab...->iab...", w, am)
    G = np.zeros((3, 3) + grid.shape)
    for i in range(grid.d):
        ax = Wp[i].ndim - grid.d + i
        C = (Wp[i] + np.roll(Wm[i], -1, ax)) / grid.h[i]
        Mt = np.swapaxes(M[i], 0, 1)
        G -= matmul_field(C, Mt)
        G += np.roll(matmul_field(Mt, C), 1, ax)
    return lam, _asym_mat(G)


def coulomb_residual_field(frame, metric):
    """Discrete ``delta A`` at each point, as an antisymmetric matrix field."""
    _, G = _gradient(frame, metric)
    return G / (2 * metric.volume_weights())


def coulomb_residual(frame, metric):
    """``||delta A||_{L^2}`` of the discrete Coulomb condition."""
    return l2_norm(coulomb_residual_field(frame, metric), metric)


class _Poisson:
    """Inverse of the standard discrete flat Laplacian (negated), zero mode dropped."""

    def __init__(self, grid):
        ks = [2 * np.pi * np.fft.fftfreq(grid.n[i], d=grid.h[i]) for i in range(grid.d)]
        kk = np.meshgrid(*ks, indexing="ij", sparse=True)
        s = sum((2 * np.sin(0.5 * kk[i] * grid.h[i]) / grid.h[i]) ** 2 for i in range(grid.d))
        scale = np.max(s) if np.max(s) > 0 else 1.0
        with np.errstate(divide="ignore"):
            self.inv = np.where(s > 1e-10 * scale, 1.0 / np.where(s > 0, s, 1.0), 0.0)
        self.axes = tuple(range(-grid.d, 0))

    def __call__(self, f):
        return np.real(np.fft.ifftn(np.fft.fftn(f, axes=self.axes) * self.inv, axes=self.axes))


@dataclass
class CoulombResult:
    frame: np.ndarray
    rotation: np.ndarray
    converged: bool
    iterations: int
    lambda_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    status: str = ""

    @property
    def residual(self):
        return self.residual_history[-1]

    @property
    def initial_residual(self):
        return self.residual_history[0]


def coulomb_project(frame0, metric, tol=None, max_iters=500, rtol=1e-8, rotation0=None,
                    max_halvings=40):
    """Minimise the Coulomb functional over pointwise rotations of ``frame0``.

    The update is ``B <- B exp(tau xi)`` with ``xi`` the gradient preconditioned
    by the inverse flat Laplacian and ``tau`` halved from 1 until ``Lambda`` does
    not increase.  Iteration stops when ``||delta A|| <= tol`` (default
    ``rtol`` times the residual of the starting frame), when ``max_iters`` is
    reached, or when no step length decreases ``Lambda`` any further (the
    functional has hit rounding level).

    Parameters
    ----------
    frame0 : ndarray, shape (3, 4, *grid)
        Reference frame, usually the pullback frame of the slice.
    rotation0 : ndarray, optional
        Initial rotation relative to ``frame0`` (for warm starts).

    Returns
    -------
    CoulombResult
        ``converged`` is False when the tolerance was not met.
    """
    grid = metric.grid
    B = np.broadcast_to(np.eye(3).reshape((3, 3) + (1,) * grid.d), (3, 3) + grid.shape).copy() \
        if rotation0 is None else rotation0.copy()
    frame = rotate_frame(frame0, B)
    lam, G = _gradient(frame, metric)
    weights = metric.volume_weights()
    res = l2_norm(G / (2 * weights), metric)
    if tol is None:
        tol = rtol * res
    lam_hist, res_hist = [lam], [res]
    if res <= tol or res == 0.0:
        return CoulombResult(frame, B, True, 0, lam_hist, res_hist, "tolerance")
    poisson = _Poisson(grid)
    status = "max-iters"
    it = 0
    for it in range(1, max_iters + 1):
        # Newton step for the linearised functional 4 h^d |D theta|^2
        xi = -poisson(vee(G) / (2 * grid.cell_volume))
        tau = 1.0
        accepted = False
        for _ in range(max_halvings):
            R = expm_so3(tau * xi)
            trial = rotate_frame(frame, R)
            lam_new, G_new = _gradient(trial, metric)
            if lam_new <= lam:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            status = "stalled"
            it -= 1
            break
        B = matmul_field(B, R)
        frame, lam, G = trial, lam_new, G_new
        res = l2_norm(G / (2 * weights), metric)
        lam_hist.append(lam)
        res_hist.append(res)
        if res <= tol:
            status = "tolerance"
            break
    # re-orthonormalise the accumulated rotation to remove drift
    B = _polar(B)
    frame = rotate_frame(frame0, B)
    return CoulombResult(frame, B, status == "tolerance", it, lam_hist, res_hist, status)


def _polar(B):
    Bm = np.moveaxis(B, (0, 1), (-2, -1))
    U, _, Vt = np.linalg.svd(Bm)
    return np.moveaxis(U @ Vt, (-2, -1), (0, 1))


def anchor_rotation(frame, reference, metric):
    """Constant rotation ``R`` best aligning ``frame R`` with ``reference`` (Procrustes)."""
    K = np.einsum("bkx,akx,x->ba", frame.reshape(3, 4, -1), reference.reshape(3, 4, -1),
                  metric.volume_weights().ravel())
    U, _, Vt = np.linalg.svd(K)
    S = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ S @ Vt


def anchor(result, reference, metric):
    """Apply the Procrustes rotation to a :class:`CoulombResult` in place."""
    R = anchor_rotation(result.frame, reference, metric)
    Rf = R.reshape((3, 3) + (1,) * metric.d)
    result.frame = rotate_frame(result.frame, Rf)
    result.rotation = matmul_field(result.rotation, Rf)
    return result


# ---------------------------------------------------------------------------
# identities

def structure_residual(A_prev, A, A_next, F, metric, dt):
    """``||F - (dA + [A, A])||_{L^2}`` over pairs ``alpha < beta``."""
    grid = metric.grid
    dA = exterior_d(A, grid, time_derivative(A_prev, A_next, dt))
    R = F - dA - commutator_form(A)
    return _pairs_norm(R, metric)


def eta_pair(A, q, metric):
    """``eta^{ab} A_a q_b`` (matrix-vector in the frame indices)."""
    out = -np.einsum("xy...,y...->x...", A[0], q[0])
    out += np.einsum("ij...,ixy...,jy...->x...", metric.ginv, A[1:], q[1:])
    return out


def q_identity_residuals(q_prev, q, q_next, A, metric, dt):
    """``(r_delta, r_d)`` for frame components ``q`` on three consecutive slices.

    ``r_delta = ||delta q - eta^{ab} A_a q_b||`` and ``r_d = ||dq + A ^ q||``, with
    ``delta q = d_t q_0 + delta_M q_spatial``.
    """
    grid = metric.grid
    qdot = time_derivative(q_prev, q_next, dt)
    dq = exterior_d(q, grid, qdot)
    r_d = _pairs_norm(dq + wedge(A, q), metric)
    delta_q = qdot[0] + codifferential(metric, q[1:])
    r_delta = l2_norm(delta_q - eta_pair(A, q, metric), metric)
    return r_delta, r_d


def nonlinearity(q, qdot, A, Adot0, F, metric):
    """Right-hand side ``H`` of the wave system for ``q``; shape ``(d + 1, 3, *grid)``.

    ``qdot`` is the time derivative of ``q`` and ``Adot0`` that of ``A_0``.
    """
    grid = metric.grid
    d = grid.d
    gi = metric.ginv
    G = metric.christoffel
    D = d + 1
    # F_{c a} eta^{ab} q_b
    H = -np.einsum("cxy...,y...->cx...", F[:, 0], q[0])
    H += np.einsum("ij...,cixy...,jy...->cx...", gi, F[:, 1:], q[1:])
    # (eta^{ab} A_a A_b) q_c
    AA = -matmul_field(A[0], A[0]) + np.einsum("ij...,ixz...,jzy...->xy...", gi, A[1:], A[1:])
    H += np.einsum("xy...,cy...->cx...", AA, q)
    # eta^{ab}(d_b A_a - Gamma^s_ba A_s) = -d_t A_0 - delta_M A
    divA = -Adot0 - codifferential(metric, A[1:])
    H += np.einsum("xy...,cy...->cx...", divA, q)
    # 2 eta^{ab} A_b (d_a q_c - Gamma^s_ac q_s)
    H -= 2 * np.einsum("xy...,cy...->cx...", A[0], qdot)
    for i in range(d):
        nabla = d1(q, i, grid)
        if not metric.is_flat:
            nabla[1:] -= np.einsum("sc...,sy...->cy...", G[:, i], q[1:])
        Ai = np.einsum("j...,jxy...->xy...", gi[i], A[1:])
        H += 2 * np.einsum("xy...,cy...->cx...", Ai, nabla)
    return H


def waveq_lhs(q_prev, q, q_next, metric, dt):
    """``q_tt - Lap_g q_0`` and ``q_tt + (Hodge Laplacian) q`` for the spatial part."""
    qtt = second_time_derivative(q_prev, q, q_next, dt)
    lhs = np.empty_like(q)
    lhs[0] = qtt[0] - laplace_beltrami(metric, q[0])
    lhs[1:] = qtt[1:] + hodge_laplacian_oneform(metric, q[1:])
    return lhs


def waveq_residual(qs, As, F, metric, dt):
    """``||LHS - H||_{L^2}`` for the second-order system satisfied by ``q``.

    ``qs`` holds ``q`` on three consecutive slices, ``As`` the connection on the
    same three slices, ``F`` the curvature at the middle slice.
    """
    q_prev, q, q_next = qs
    qdot = time_derivative(q_prev, q_next, dt)
    Adot0 = time_derivative(As[0][0], As[2][0], dt)
    H = nonlinearity(q, qdot, As[1], Adot0, F, metric)
    lhs = waveq_lhs(q_prev, q, q_next, metric, dt)
    return l2_norm(lhs - H, metric), l2_norm(H, metric)
