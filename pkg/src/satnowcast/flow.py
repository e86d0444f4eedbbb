"""Dense TV-L1 optical flow (pyramidal primal-dual) and backward warping.

The solver minimizes the classic total-variation regularized L1 data term

    E(u) = sum_r |grad u1(r)| + |grad u2(r)| + lambda * |I1(r + u(r)) - I0(r)|

coarse-to-fine: at each pyramid level the data term is linearized around the
current flow (re-warping ``n_warps`` times), and the resulting convex problem
is solved by alternating a pointwise shrinkage step with a dual update of the
total-variation term. Everything is deterministic given inputs and
parameters.

Flow components follow image convention: ``u`` is displacement along
columns (x), ``v`` along rows (y), in pixels per frame interval. For a pair
``(I0, I1)`` the estimate satisfies ``I1(r + flow(r)) ~ I0(r)`` ... i.e. the
flow maps content of ``I0`` onto its position in ``I1`` (forward motion).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DomainError, ShapeError

_MIN_LEVEL_SIZE = 16
_PYRAMID_SIGMA = 0.8  # presmoothing before each 0.5x downsample


@dataclass
class FlowParams:
    """TV-L1 solver parameters.

    ``tau`` (primal step) and the implied dual step ``tau/theta`` satisfy the
    standard stability condition tau * (tau/theta) * 8 <= 1 for the defaults.
    """

    lambda_data: float = 0.15
    tau: float = 0.25
    theta: float = 0.3
    n_scales: int = 5
    scale_factor: float = 0.5
    n_warps: int = 5
    n_inner_iters: int = 300
    stop_eps: float = 0.01
    median_filter: bool = True

    def __post_init__(self):
        if self.n_scales < 1:
            raise ValueError("n_scales must be >= 1")
        if not (0.0 < self.scale_factor < 1.0):
            raise ValueError("scale_factor must be in (0, 1)")


@dataclass
class FlowField:
    """Per-pixel displacement in pixels per frame interval."""

    u: np.ndarray
    v: np.ndarray
    valid_mask: np.ndarray | None = None

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float32)
        self.v = np.ascontiguousarray(self.v, dtype=np.float32)
        if self.u.shape != self.v.shape:
            raise ShapeError("flow components have different shapes")
        if self.valid_mask is None:
            self.valid_mask = np.ones(self.u.shape, dtype=bool)
        self.valid_mask = np.ascontiguousarray(self.valid_mask, dtype=bool)

    @property
    def shape(self):
        return self.u.shape

    def scaled(self, factor: float) -> "FlowField":
        return FlowField(self.u * factor, self.v * factor, self.valid_mask.copy())


def _bilinear_replicate(img, rows_f, cols_f):
    """Bilinear sample with replicated borders (no validity tracking)."""
    h, w = img.shape
    r = np.clip(rows_f, 0.0, h - 1.0)
    c = np.clip(cols_f, 0.0, w - 1.0)
    r0 = np.floor(r).astype(np.int32)
    c0 = np.floor(c).astype(np.int32)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (r - r0).astype(img.dtype)
    fc = (c - c0).astype(img.dtype)
    top = img[r0, c0] * (1 - fc) + img[r0, c1] * fc
    bot = img[r1, c0] * (1 - fc) + img[r1, c1] * fc
    return top * (1 - fr) + bot * fr


def _warp_replicate(img, u, v, grid_r, grid_c):
    return _bilinear_replicate(img, grid_r + v, grid_c + u)


def _forward_grad(a):
    """Forward differences; the last row/column of the respective axis is 0."""
    dx = np.zeros_like(a)
    dy = np.zeros_like(a)
    dx[:, :-1] = a[:, 1:] - a[:, :-1]
    dy[:-1, :] = a[1:, :] - a[:-1, :]
    return dx, dy


def _divergence(p1, p2):
    """Negative adjoint of :func:`_forward_grad` (backward differences)."""
    div = p1.copy()
    div[:, 1:] -= p1[:, :-1]
    div += p2
    div[1:, :] -= p2[:-1, :]
    return div


def _central_grad(a):
    """Central differences with replicated borders."""
    gx = np.empty_like(a)
    gy = np.empty_like(a)
    gx[:, 1:-1] = (a[:, 2:] - a[:, :-2]) * 0.5
    gx[:, 0] = a[:, 1] - a[:, 0]
    gx[:, -1] = a[:, -1] - a[:, -2]
    gy[1:-1, :] = (a[2:, :] - a[:-2, :]) * 0.5
    gy[0, :] = a[1, :] - a[0, :]
    gy[-1, :] = a[-1, :] - a[-2, :]
    return gx, gy


def _resize_bilinear(a, shape):
    h, w = a.shape
    nh, nw = shape
    rows = (np.arange(nh, dtype=np.float64) + 0.5) * (h / nh) - 0.5
    cols = (np.arange(nw, dtype=np.float64) + 0.5) * (w / nw) - 0.5
    rr = np.broadcast_to(rows[:, None], (nh, nw))
    cc = np.broadcast_to(cols[None, :], (nh, nw))
    return _bilinear_replicate(a, rr, cc).astype(a.dtype)


def _tvl1_level(i0, i1, u, v, params: FlowParams, energies=None):
    """Solve one pyramid level in place, warm-started from (u, v)."""
    h, w = i0.shape
    grid_r, grid_c = np.meshgrid(
        np.arange(h, dtype=np.float32), np.arange(w, dtype=np.float32), indexing="ij"
    )
    i1x, i1y = _central_grad(i1)
    lam_theta = np.float32(params.lambda_data * params.theta)
    theta = np.float32(params.theta)
    sigma = np.float32(params.tau / params.theta)
    stop_sq = np.float32(params.stop_eps**2)

    p11 = np.zeros_like(i0)
    p12 = np.zeros_like(i0)
    p21 = np.zeros_like(i0)
    p22 = np.zeros_like(i0)

    for _ in range(params.n_warps):
        i1w = _warp_replicate(i1, u, v, grid_r, grid_c)
        i1wx = _warp_replicate(i1x, u, v, grid_r, grid_c)
        i1wy = _warp_replicate(i1y, u, v, grid_r, grid_c)
        grad_sq = i1wx**2 + i1wy**2
        rho_c = i1w - i1wx * u - i1wy * v - i0
        small_grad = grad_sq < 1e-12

        for _ in range(params.n_inner_iters):
            rho = rho_c + i1wx * u + i1wy * v
            th = lam_theta * grad_sq
            # Pointwise shrinkage of the linearized data term.
            step = np.where(
                rho < -th,
                lam_theta,
                np.where(rho > th, -lam_theta, -rho / np.maximum(grad_sq, 1e-12)),
            )
            step = np.where(small_grad, 0.0, step).astype(i0.dtype)
            v1 = u + step * i1wx
            v2 = v + step * i1wy

            u_new = v1 + theta * _divergence(p11, p12)
            v_new = v2 + theta * _divergence(p21, p22)
            err = np.mean((u_new - u) ** 2 + (v_new - v) ** 2)
            u, v = u_new, v_new

            ux, uy = _forward_grad(u)
            vx, vy = _forward_grad(v)
            den_u = 1.0 + sigma * np.sqrt(ux**2 + uy**2)
            den_v = 1.0 + sigma * np.sqrt(vx**2 + vy**2)
            p11 = (p11 + sigma * ux) / den_u
            p12 = (p12 + sigma * uy) / den_u
            p21 = (p21 + sigma * vx) / den_v
            p22 = (p22 + sigma * vy) / den_v

            if energies is not None:
                data_res = rho_c + i1wx * u + i1wy * v
                energies.append(
                    float(
                        np.sum(np.sqrt(ux**2 + uy**2) + np.sqrt(vx**2 + vy**2))
                        + params.lambda_data * np.sum(np.abs(data_res))
                    )
                )
            if err < stop_sq:
                break

        if params.median_filter:
            u = ndimage.median_filter(u, size=3, mode="nearest")
            v = ndimage.median_filter(v, size=3, mode="nearest")
    return u, v


def estimate_flow(i0, i1, params: FlowParams | None = None, return_diagnostics: bool = False):
    """Estimate dense TV-L1 optical flow from frame ``i0`` to frame ``i1``.

    Parameters
    ----------
    i0, i1 : ndarray (rows, cols)
        Single-channel frames of equal shape, finite everywhere, at least
        16x16. Intensities are jointly normalized to [0, 1] so that
        ``lambda_data`` is scale-free.
    params : FlowParams, optional
    return_diagnostics : bool
        When true, also return a dict with per-level inner-iteration energy
        traces (list of lists, coarsest level first).

    Returns
    -------
    FlowField, and the diagnostics dict if requested.
    """
    params = params or FlowParams()
    i0 = np.asarray(i0, dtype=np.float32)
    i1 = np.asarray(i1, dtype=np.float32)
    if i0.shape != i1.shape or i0.ndim != 2:
        raise ShapeError(f"frame shapes differ or are not 2-D: {i0.shape} vs {i1.shape}")
    if not (np.isfinite(i0).all() and np.isfinite(i1).all()):
        raise DomainError("optical flow inputs must be finite")
    if min(i0.shape) < _MIN_LEVEL_SIZE:
        raise ShapeError(f"frames must be at least {_MIN_LEVEL_SIZE} pixels on each side")

    lo = min(float(i0.min()), float(i1.min()))
    hi = max(float(i0.max()), float(i1.max()))
    if hi - lo < 1e-12:
        zero = np.zeros(i0.shape, dtype=np.float32)
        flow = FlowField(zero, zero.copy())
        return (flow, {"energies": []}) if return_diagnostics else flow
    scale = np.float32(1.0 / (hi - lo))
    i0 = (i0 - np.float32(lo)) * scale
    i1 = (i1 - np.float32(lo)) * scale

    # Pyramid, finest first; depth clamped so the coarsest level stays >= 16.
    pyr0, pyr1 = [i0], [i1]
    for _ in range(params.n_scales - 1):
        prev0, prev1 = pyr0[-1], pyr1[-1]
        nh = int(round(prev0.shape[0] * params.scale_factor))
        nw = int(round(prev0.shape[1] * params.scale_factor))
        if min(nh, nw) < _MIN_LEVEL_SIZE:
            break
        sm0 = ndimage.gaussian_filter(prev0, _PYRAMID_SIGMA, mode="nearest")
        sm1 = ndimage.gaussian_filter(prev1, _PYRAMID_SIGMA, mode="nearest")
        pyr0.append(_resize_bilinear(sm0, (nh, nw)))
        pyr1.append(_resize_bilinear(sm1, (nh, nw)))

    diagnostics = {"energies": []}
    u = np.zeros(pyr0[-1].shape, dtype=np.float32)
    v = np.zeros(pyr0[-1].shape, dtype=np.float32)
    for level in range(len(pyr0) - 1, -1, -1):
        l0, l1 = pyr0[level], pyr1[level]
        if u.shape != l0.shape:
            ratio_r = l0.shape[0] / u.shape[0]
            ratio_c = l0.shape[1] / u.shape[1]
            u = (_resize_bilinear(u, l0.shape) * np.float32(ratio_c)).astype(np.float32)
            v = (_resize_bilinear(v, l0.shape) * np.float32(ratio_r)).astype(np.float32)
        trace = [] if return_diagnostics else None
        u, v = _tvl1_level(l0, l1, u, v, params, energies=trace)
        if return_diagnostics:
            diagnostics["energies"].insert(0, trace)

    flow = FlowField(u, v)
    return (flow, diagnostics) if return_diagnostics else flow


def warp(image, flow: FlowField, fill: float = float("nan"), valid=None):
    """Backward-warp an image: ``out(r) = image(r + flow(r))`` bilinearly.

    Sample positions outside the raster footprint receive ``fill`` and are
    reported invalid. Where a ``valid`` mask is given, invalid source pixels
    are excluded and the bilinear weights renormalized over the valid
    neighbors; a sample with no valid neighbor is invalid.

    Returns
    -------
    (warped, valid_out) : float32 ndarray and bool ndarray
    """
    image = np.asarray(image, dtype=np.float32)
    if image.shape != flow.shape:
        raise ShapeError(f"image shape {image.shape} != flow shape {flow.shape}")
    h, w = image.shape
    grid_r, grid_c = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    rows_f = grid_r + flow.v.astype(np.float64)
    cols_f = grid_c + flow.u.astype(np.float64)

    inside = (rows_f >= -0.5) & (rows_f <= h - 0.5) & (cols_f >= -0.5) & (cols_f <= w - 0.5)
    vmask = np.ones(image.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)

    r0 = np.floor(rows_f)
    c0 = np.floor(cols_f)
    fr = rows_f - r0
    fc = cols_f - c0
    r0i = np.clip(r0.astype(np.int64), 0, h - 1)
    r1i = np.clip(r0.astype(np.int64) + 1, 0, h - 1)
    c0i = np.clip(c0.astype(np.int64), 0, w - 1)
    c1i = np.clip(c0.astype(np.int64) + 1, 0, w - 1)

    # Zero out invalid pixels first: 0-weight * NaN fill would poison the sums.
    vd = np.where(vmask, image, 0).astype(np.float64)
    acc = np.zeros(image.shape, dtype=np.float64)
    wsum = np.zeros(image.shape, dtype=np.float64)
    for ri, wr in ((r0i, 1.0 - fr), (r1i, fr)):
        for ci, wc in ((c0i, 1.0 - fc), (c1i, fc)):
            wgt = wr * wc * vmask[ri, ci]
            acc += wgt * vd[ri, ci]
            wsum += wgt
    ok = inside & (wsum > 1e-12)
    out = np.full(image.shape, np.float32(fill), dtype=np.float32)
    vals = np.zeros(image.shape, dtype=np.float64)
    np.divide(acc, wsum, out=vals, where=ok)
    out[ok] = vals[ok].astype(np.float32)
    return out, ok
