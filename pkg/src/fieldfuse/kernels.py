"""Hot numeric kernels with a compiled and a plain-numpy implementation.

Fields are packed into flat arrays (see ``field.Field.packed``) so the same
data feeds both paths. The numba variants are compiled lazily on first use;
selection happens once at import through :mod:`fieldfuse._accel`.

Packed layout, one row per primitive:

* ``kinds``: 0 sphere, 1 box, 2 gaussian
* ``rot``: (P, 3, 3) world-from-primitive rotation (identity unless box)
* ``center``: (P, 3) sphere/gaussian center or box translation
* ``size``: (P, 3) radius / half extents / std in column 0
* ``sigma0``: (P,) peak density
* ``ckind``: 0 constant, 1 axis gradient
* ``ca``, ``cb``: (P, 3) constant color, or gradient endpoints
* ``caxis``: (P,) gradient axis index
* ``cspan``: (P, 2) gradient coordinate span
"""

from __future__ import annotations

import numpy as np

from ._accel import NUMBA_ENABLED


# ----------------------------------------------------------------------
# numpy reference implementations


def eval_sigma_color_numpy(points, packed, background):
    """Density and density-weighted color at ``(N, 3)`` points."""
    pts = np.asarray(points, dtype=float)
    kinds, rot, center, size, sigma0, ckind, ca, cb, caxis, cspan = packed
    n = pts.shape[0]
    sigma = np.zeros(n)
    csum = np.zeros((n, 3))
    for j in range(kinds.shape[0]):
        rel = pts - center[j]
        if kinds[j] == 0:  # sphere
            inside = np.einsum("ij,ij->i", rel, rel) <= size[j, 0] ** 2
            s = np.where(inside, sigma0[j], 0.0)
        elif kinds[j] == 1:  # box
            local = rel @ rot[j]
            inside = np.all(np.abs(local) <= size[j], axis=1)
            s = np.where(inside, sigma0[j], 0.0)
        else:  # gaussian
            r2 = np.einsum("ij,ij->i", rel, rel)
            s = sigma0[j] * np.exp(-0.5 * r2 / size[j, 0] ** 2)
        if ckind[j] == 0:
            c = ca[j]
        else:
            lo, hi = cspan[j]
            g = np.clip((pts[:, caxis[j]] - lo) / (hi - lo), 0.0, 1.0)
            c = ca[j] + g[:, None] * (cb[j] - ca[j])
        sigma += s
        csum += s[:, None] * c
    color = np.where(
        sigma[:, None] > 0.0,
        csum / np.where(sigma[:, None] > 0.0, sigma[:, None], 1.0),
        np.asarray(background, dtype=float),
    )
    return sigma, color


def render_rays_numpy(origins, dirs, t_mid, delta, packed, background, d_cutoff):
    """Quadrature rendering of ``(R, 3)`` rays sharing one sample ladder.

    Returns per-ray color (R, 3), expected depth (R,) with NaN where nothing
    terminates, accumulation (R,), and distant accumulation (R,).
    """
    origins = np.asarray(origins, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    bg = np.asarray(background, dtype=float)
    n_rays = origins.shape[0]
    n = t_mid.size

    pts = origins[:, None, :] + t_mid[None, :, None] * dirs[:, None, :]
    sigma, color = eval_sigma_color_numpy(pts.reshape(-1, 3), packed, bg)
    sigma = sigma.reshape(n_rays, n)
    color = color.reshape(n_rays, n, 3)

    tau = sigma * delta[None, :]
    before = np.concatenate(
        [np.zeros((n_rays, 1)), np.cumsum(tau, axis=1)[:, :-1]], axis=1
    )
    p = np.exp(-before) * -np.expm1(-tau)
    acc = p.sum(axis=1)
    out_color = (p[..., None] * color).sum(axis=1) + (1.0 - acc)[:, None] * bg
    with np.errstate(invalid="ignore", divide="ignore"):
        depth = np.where(acc > 0.0, (p * t_mid[None, :]).sum(axis=1) / acc, np.nan)
    frac = np.clip((t_mid + delta / 2.0 - d_cutoff) / delta, 0.0, 1.0)
    qd = (p * frac[None, :]).sum(axis=1)
    return out_color, depth, acc, qd


# ----------------------------------------------------------------------
# numba implementations

if NUMBA_ENABLED:
    import numba
    from numba import njit, prange

    @njit(cache=True, inline="always")
    def _point_sigma(px, py, pz, j, kinds, rot, center, size, sigma0):
        rx = px - center[j, 0]
        ry = py - center[j, 1]
        rz = pz - center[j, 2]
        if kinds[j] == 0:
            if rx * rx + ry * ry + rz * rz <= size[j, 0] * size[j, 0]:
                return sigma0[j]
            return 0.0
        if kinds[j] == 1:
            lx = rx * rot[j, 0, 0] + ry * rot[j, 1, 0] + rz * rot[j, 2, 0]
            ly = rx * rot[j, 0, 1] + ry * rot[j, 1, 1] + rz * rot[j, 2, 1]
            lz = rx * rot[j, 0, 2] + ry * rot[j, 1, 2] + rz * rot[j, 2, 2]
            if (
                abs(lx) <= size[j, 0]
                and abs(ly) <= size[j, 1]
                and abs(lz) <= size[j, 2]
            ):
                return sigma0[j]
            return 0.0
        r2 = rx * rx + ry * ry + rz * rz
        return sigma0[j] * np.exp(-0.5 * r2 / (size[j, 0] * size[j, 0]))

    @njit(cache=True, inline="always")
    def _point_color(px, py, pz, j, ckind, ca, cb, caxis, cspan):
        if ckind[j] == 0:
            return ca[j, 0], ca[j, 1], ca[j, 2]
        if caxis[j] == 0:
            coord = px
        elif caxis[j] == 1:
            coord = py
        else:
            coord = pz
        g = (coord - cspan[j, 0]) / (cspan[j, 1] - cspan[j, 0])
        if g < 0.0:
            g = 0.0
        elif g > 1.0:
            g = 1.0
        return (
            ca[j, 0] + g * (cb[j, 0] - ca[j, 0]),
            ca[j, 1] + g * (cb[j, 1] - ca[j, 1]),
            ca[j, 2] + g * (cb[j, 2] - ca[j, 2]),
        )

    @njit(cache=True, parallel=True)
    def _eval_sigma_color_nb(
        pts, kinds, rot, center, size, sigma0, ckind, ca, cb, caxis, cspan, bg
    ):
        n = pts.shape[0]
        n_prim = kinds.shape[0]
        sigma = np.zeros(n)
        color = np.empty((n, 3))
        for i in prange(n):
            px, py, pz = pts[i, 0], pts[i, 1], pts[i, 2]
            s_tot = 0.0
            cr = 0.0
            cg = 0.0
            cbl = 0.0
            for j in range(n_prim):
                s = _point_sigma(px, py, pz, j, kinds, rot, center, size, sigma0)
                if s > 0.0:
                    c0, c1, c2 = _point_color(px, py, pz, j, ckind, ca, cb, caxis, cspan)
                    s_tot += s
                    cr += s * c0
                    cg += s * c1
                    cbl += s * c2
            sigma[i] = s_tot
            if s_tot > 0.0:
                color[i, 0] = cr / s_tot
                color[i, 1] = cg / s_tot
                color[i, 2] = cbl / s_tot
            else:
                color[i, 0] = bg[0]
                color[i, 1] = bg[1]
                color[i, 2] = bg[2]
        return sigma, color

    @njit(cache=True, parallel=True)
    def _render_rays_nb(
        origins,
        dirs,
        t_mid,
        delta,
        kinds,
        rot,
        center,
        size,
        sigma0,
        ckind,
        ca,
        cb,
        caxis,
        cspan,
        bg,
        d_cutoff,
    ):
        n_rays = origins.shape[0]
        n = t_mid.shape[0]
        n_prim = kinds.shape[0]
        out_color = np.empty((n_rays, 3))
        out_depth = np.empty(n_rays)
        out_acc = np.empty(n_rays)
        out_qd = np.empty(n_rays)
        for r in prange(n_rays):
            ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
            dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
            trans = 1.0
            acc = 0.0
            qd = 0.0
            dsum = 0.0
            cr = 0.0
            cg = 0.0
            cbl = 0.0
            for k in range(n):
                t = t_mid[k]
                px = ox + t * dx
                py = oy + t * dy
                pz = oz + t * dz
                s_tot = 0.0
                scr = 0.0
                scg = 0.0
                scb = 0.0
                for j in range(n_prim):
                    s = _point_sigma(px, py, pz, j, kinds, rot, center, size, sigma0)
                    if s > 0.0:
                        c0, c1, c2 = _point_color(
                            px, py, pz, j, ckind, ca, cb, caxis, cspan
                        )
                        s_tot += s
                        scr += s * c0
                        scg += s * c1
                        scb += s * c2
                if s_tot > 0.0:
                    scr /= s_tot
                    scg /= s_tot
                    scb /= s_tot
                tau = s_tot * delta[k]
                p = trans * -np.expm1(-tau)
                if p > 0.0:
                    cr += p * scr
                    cg += p * scg
                    cbl += p * scb
                    dsum += p * t
                    acc += p
                    frac = (t + delta[k] / 2.0 - d_cutoff) / delta[k]
                    if frac < 0.0:
                        frac = 0.0
                    elif frac > 1.0:
                        frac = 1.0
                    qd += p * frac
                trans *= np.exp(-tau)
            out_color[r, 0] = cr + (1.0 - acc) * bg[0]
            out_color[r, 1] = cg + (1.0 - acc) * bg[1]
            out_color[r, 2] = cbl + (1.0 - acc) * bg[2]
            out_acc[r] = acc
            out_qd[r] = qd
            out_depth[r] = dsum / acc if acc > 0.0 else np.nan
        return out_color, out_depth, out_acc, out_qd


# ----------------------------------------------------------------------
# dispatch


def eval_sigma_color(points, packed, background):
    """Field evaluation at a flat point array; picks the active backend."""
    if NUMBA_ENABLED:
        pts = np.ascontiguousarray(points, dtype=float)
        bg = np.ascontiguousarray(background, dtype=float)
        return _eval_sigma_color_nb(pts, *packed, bg)
    return eval_sigma_color_numpy(points, packed, background)


def render_rays(origins, dirs, t_mid, delta, packed, background, d_cutoff):
    """Batch ray rendering; picks the active backend."""
    if NUMBA_ENABLED:
        return _render_rays_nb(
            np.ascontiguousarray(origins, dtype=float),
            np.ascontiguousarray(dirs, dtype=float),
            np.ascontiguousarray(t_mid, dtype=float),
            np.ascontiguousarray(delta, dtype=float),
            *packed,
            np.ascontiguousarray(background, dtype=float),
            float(d_cutoff),
        )
    return render_rays_numpy(origins, dirs, t_mid, delta, packed, background, d_cutoff)
