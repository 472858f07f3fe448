"""Numerical fluxes and MUSCL reconstruction for one sub-domain.

All kernels act on arrays of left/right states sharing one rest depth.
"""

from __future__ import annotations

import numpy as np

from ..swe_core import flux_v, max_speed_v

SCHEMES = ("rusanov", "hll", "muscl_rusanov")


def rusanov_flux(zl, ql, zr, qr, h_rest, g):
    """Local Lax-Friedrichs flux with speed max(|v| + c) of both states."""
    f1l, f2l = flux_v(zl, ql, h_rest, g)
    f1r, f2r = flux_v(zr, qr, h_rest, g)
    s = np.maximum(max_speed_v(zl, ql, h_rest, g), max_speed_v(zr, qr, h_rest, g))
    return 0.5 * (f1l + f1r) - 0.5 * s * (zr - zl), 0.5 * (f2l + f2r) - 0.5 * s * (qr - ql)


def hll_flux(zl, ql, zr, qr, h_rest, g):
    """HLL flux with Davis wave-speed estimates."""
    hl, hr = h_rest + zl, h_rest + zr
    vl, vr = ql / hl, qr / hr
    cl, cr = np.sqrt(g * hl), np.sqrt(g * hr)
    sl = np.minimum(vl - cl, vr - cr)
    sr = np.maximum(vl + cl, vr + cr)
    f1l, f2l = flux_v(zl, ql, h_rest, g)
    f1r, f2r = flux_v(zr, qr, h_rest, g)
    sl_ = np.minimum(sl, 0.0)
    sr_ = np.maximum(sr, 0.0)
    den = sr_ - sl_
    den = np.where(den > 0, den, 1.0)
    f1 = (sr_ * f1l - sl_ * f1r + sl_ * sr_ * (zr - zl)) / den
    f2 = (sr_ * f2l - sl_ * f2r + sl_ * sr_ * (qr - ql)) / den
    return f1, f2


def minmod(a, b):
    return np.where(a * b > 0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


def muscl_faces(u, ghost_l, ghost_r):
    """Minmod-limited face values of a cell-average array.

    ``ghost_l``/``ghost_r`` are values at virtual cells beyond each end.
    Returns (value at the left face, value at the right face) per cell.
    """
    ext = np.concatenate(([ghost_l], u, [ghost_r]))
    d = np.diff(ext)
    slope = minmod(d[:-1], d[1:])
    return u - 0.5 * slope, u + 0.5 * slope


INTERIOR_FLUX = {"rusanov": rusanov_flux, "hll": hll_flux, "muscl_rusanov": rusanov_flux}
