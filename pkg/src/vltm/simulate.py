"""Bounded-bounce analytic path-sum transient simulator.

Every ordered patch sequence ``(v_1, ..., v_m)`` with ``m <= max_bounces``
forms one path ``<x_l, v_1, ..., v_m, x_s>`` per laser/SPAD pair. Patches are
point scatterers with an area weight, so each path is evaluated in closed
form and deposited into the bin holding its time of flight.
"""
from __future__ import annotations

import itertools

import numpy as np

from .scene import (SPEED_OF_LIGHT, ImpulseResponse, Lambertian, NoiseSpec, Patch, Phong,
                    SceneDescription, SceneError)

_SEGMENT_EPS = 1e-9


def brdf_eval(material, incoming_dir, outgoing_dir, normal, albedo=1.0):
    """BRDF value for unit directions pointing away from the surface.

    ``incoming_dir`` points toward the light, ``outgoing_dir`` toward the
    viewer. Either one below the normal's hemisphere gives 0. Inputs
    broadcast over leading axes.
    """
    wi = np.asarray(incoming_dir, dtype=float)
    wo = np.asarray(outgoing_dir, dtype=float)
    n = np.asarray(normal, dtype=float)
    cos_i = np.sum(wi * n, axis=-1)
    cos_o = np.sum(wo * n, axis=-1)
    front = (cos_i > 0) & (cos_o > 0)
    if isinstance(material, Lambertian):
        value = np.full(np.shape(front), albedo / np.pi)
    elif isinstance(material, Phong):
        e = material.exponent
        mirror = 2.0 * cos_i[..., None] * n - wi
        lobe = np.maximum(0.0, np.sum(mirror * wo, axis=-1))
        value = albedo * (e + 2.0) / (2.0 * np.pi) * lobe ** e
    else:
        raise TypeError(f"unsupported material {material!r}")
    out = np.where(front, value, 0.0)
    return float(out) if out.ndim == 0 else out


def _segment_blocked(p, q, patches, skip):
    """Boolean mask of segments ``p -> q`` crossing any patch disk not in ``skip``."""
    p, q = np.broadcast_arrays(np.asarray(p, float), np.asarray(q, float))
    d = q - p
    blocked = np.zeros(p.shape[:-1], dtype=bool)
    for idx, patch in enumerate(patches):
        if idx in skip:
            continue
        denom = d @ patch.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((patch.center - p) @ patch.normal) / denom
            hit_point = p + t[..., None] * d
            inside = np.sum((hit_point - patch.center) ** 2, axis=-1) < patch.radius ** 2
        blocked |= (np.abs(denom) > 0) & (t > _SEGMENT_EPS) & (t < 1 - _SEGMENT_EPS) & inside
    return blocked


def _wall_leg(wall_points, wall_normal, patch: Patch):
    """Distance, unit direction (patch -> wall) and geometric factor of a wall leg.

    The factor is ``cos_wall * cos_patch / r^2``; it is computed the same way
    for laser and SPAD legs so the 1-bounce product is symmetric.
    """
    diff = wall_points - patch.center
    r = np.linalg.norm(diff, axis=-1)
    to_wall = diff / r[:, None]
    cos_wall = np.maximum(0.0, -(to_wall @ wall_normal))
    cos_patch = np.maximum(0.0, to_wall @ patch.normal)
    return r, to_wall, cos_wall * cos_patch / r ** 2


def _deposit(data, time_axis, times, values):
    """Add ``values`` into the bins of ``times``; returns the dropped-path count."""
    bins = time_axis.bin_index(times)
    keep = (bins >= 0) & (bins < time_axis.bin_count) & (values > 0)
    dropped = int(np.count_nonzero((values > 0) & ~keep))
    li, si = np.nonzero(keep)
    np.add.at(data, (li, si, bins[keep]), values[keep])
    return dropped


def _path_sequences(n_patches, max_bounces):
    for m in range(1, max_bounces + 1):
        for seq in itertools.product(range(n_patches), repeat=m):
            if all(a != b for a, b in zip(seq, seq[1:])):
                yield seq


def simulate_impulse_response(scene: SceneDescription) -> ImpulseResponse:
    """Render ``H(x_l, x_s, t)`` of an analytic patch scene.

    Paths are enumerated in a fixed order (bounce count, then lexicographic
    patch indices) so the floating-point accumulation is reproducible.
    Arrivals outside the time axis are dropped and counted in
    ``n_truncated``. If ``scene.noise`` is set, Poisson noise is applied last.
    """
    relay, axis, patches = scene.relay, scene.time_axis, scene.patches
    for i, patch in enumerate(patches):
        if relay.signed_distance(patch.center) <= 0:
            raise SceneError(f"patch {i} at {patch.center.tolist()} is not in front of the relay wall")

    data = np.zeros((relay.n_lasers, relay.n_spads, axis.bin_count))
    if not patches:
        h = ImpulseResponse(relay, axis, data)
        return apply_noise(h, scene.noise) if scene.noise else h

    normal = relay.wall_normal
    laser_legs = [_wall_leg(relay.laser_points, normal, p) for p in patches]
    spad_legs = [_wall_leg(relay.spad_points, normal, p) for p in patches]
    laser_vis = [~_segment_blocked(relay.laser_points, p.center, patches, {i})
                 for i, p in enumerate(patches)]
    spad_vis = [~_segment_blocked(relay.spad_points, p.center, patches, {i})
                for i, p in enumerate(patches)]

    dropped = 0
    for seq in _path_sequences(len(patches), scene.max_bounces):
        first, last = patches[seq[0]], patches[seq[-1]]
        r_l, to_laser, g_l = laser_legs[seq[0]]
        r_s, to_spad, g_s = spad_legs[seq[-1]]
        g_l = g_l * laser_vis[seq[0]]
        g_s = g_s * spad_vis[seq[-1]]

        if len(seq) == 1:
            f = brdf_eval(first.material, to_laser[:, None, :], to_spad[None, :, :],
                          first.normal, first.albedo)
            throughput = (g_l[:, None] * g_s[None, :]) * (first.area * f)
            times = (r_l[:, None] + r_s[None, :]) / SPEED_OF_LIGHT
        else:
            inner = 1.0
            inner_length = 0.0
            for j in range(len(seq) - 1):
                a, b = patches[seq[j]], patches[seq[j + 1]]
                diff = b.center - a.center
                d = float(np.linalg.norm(diff))
                if d == 0.0:
                    # coincident patches: no direction, no transport
                    inner = 0.0
                    break
                w = diff / d
                cos_a = max(0.0, float(w @ a.normal))
                cos_b = max(0.0, float(-w @ b.normal))
                visible = not _segment_blocked(a.center, b.center, patches, {seq[j], seq[j + 1]})
                inner *= cos_a * cos_b / d ** 2 * visible
                inner_length += d
            if inner == 0.0:
                continue
            for j in range(1, len(seq) - 1):
                p = patches[seq[j]]
                wi = patches[seq[j - 1]].center - p.center
                wo = patches[seq[j + 1]].center - p.center
                inner *= p.area * brdf_eval(p.material, wi / np.linalg.norm(wi),
                                            wo / np.linalg.norm(wo), p.normal, p.albedo)
            if inner == 0.0:
                continue
            to_second = patches[seq[1]].center - first.center
            to_second /= np.linalg.norm(to_second)
            from_prev = patches[seq[-2]].center - last.center
            from_prev /= np.linalg.norm(from_prev)
            f_first = first.area * brdf_eval(first.material, to_laser, to_second,
                                             first.normal, first.albedo)
            f_last = last.area * brdf_eval(last.material, from_prev, to_spad,
                                           last.normal, last.albedo)
            throughput = ((g_l * f_first)[:, None] * (g_s * f_last)[None, :]) * inner
            times = ((r_l + inner_length)[:, None] + r_s[None, :]) / SPEED_OF_LIGHT
        dropped += _deposit(data, axis, times, throughput)

    h = ImpulseResponse(relay, axis, data, n_truncated=dropped)
    if scene.noise is not None:
        h = apply_noise(h, scene.noise)
    return h


def apply_noise(h: ImpulseResponse, spec: NoiseSpec) -> ImpulseResponse:
    """Replace every bin by ``Poisson(scale * value) / scale``."""
    if not spec.scale > 0:
        raise SceneError(f"noise scale must be > 0, got {spec.scale}")
    rng = np.random.default_rng(spec.seed)
    counts = rng.poisson(spec.scale * h.data)
    return ImpulseResponse(h.topology, h.time_axis, counts / spec.scale, h.n_truncated)
