"""Cook-Torrance microfacet BRDF: GGX distribution, Schlick Fresnel,
Smith/Schlick-GGX geometry, Lambertian diffuse, analytic parameter
derivatives, and GGX importance sampling.

Conventions: alpha = clamp(roughness)^2 (Disney/UE4), k = clamp(roughness)^2 / 2,
dielectric F0 = 0.04, diffuse lobe scaled by (1 - metallic).

All functions broadcast over leading axes; scalars in, scalars out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import dot, orthonormal_basis, reflect

ROUGH_MIN = 1e-3
DIELECTRIC_F0 = 0.04


@dataclass(frozen=True)
class MaterialSample:
    """Per-point svBRDF parameters: albedo (..., 3), metallic/roughness (...)."""

    albedo: np.ndarray
    metallic: np.ndarray
    roughness: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "albedo", np.clip(np.asarray(self.albedo, dtype=np.float64), 0.0, 1.0))
        object.__setattr__(self, "metallic", np.clip(np.asarray(self.metallic, dtype=np.float64), 0.0, 1.0))
        object.__setattr__(self, "roughness", np.clip(np.asarray(self.roughness, dtype=np.float64), 0.0, 1.0))


@dataclass(frozen=True)
class ShadingGeometry:
    """Unit normal n and unit directions wi (incident), wo (outgoing)."""

    n: np.ndarray
    wi: np.ndarray
    wo: np.ndarray


def alpha_from_roughness(roughness) -> np.ndarray:
    """GGX alpha: floored roughness squared."""
    return np.maximum(np.asarray(roughness, dtype=np.float64), ROUGH_MIN) ** 2


def ggx_ndf(n_dot_h, alpha2) -> np.ndarray:
    """Microfacet orientation density D(h)."""
    n_dot_h = np.asarray(n_dot_h, dtype=np.float64)
    d = n_dot_h**2 * (alpha2 - 1.0) + 1.0
    return alpha2 / (np.pi * d**2)


def fresnel_schlick(o_dot_h, f0) -> np.ndarray:
    """Schlick approximation, componentwise over f0 (..., 3)."""
    o_dot_h = np.asarray(o_dot_h, dtype=np.float64)
    f0 = np.asarray(f0, dtype=np.float64)
    t = (1.0 - np.clip(o_dot_h, 0.0, 1.0)) ** 5
    return f0 + (1.0 - f0) * t[..., None] if f0.ndim > o_dot_h.ndim else f0 + (1.0 - f0) * t


def f0_from_material(m: MaterialSample) -> np.ndarray:
    """Normal-incidence reflectance: 0.04 dielectric base mixed to albedo by metallic."""
    met = m.metallic[..., None]
    return (1.0 - met) * DIELECTRIC_F0 + met * m.albedo


def smith_k(roughness) -> np.ndarray:
    return np.maximum(np.asarray(roughness, dtype=np.float64), ROUGH_MIN) ** 2 / 2.0


def smith_g1(n_dot_w, k) -> np.ndarray:
    """Monodirectional Schlick-GGX shadowing term."""
    n_dot_w = np.asarray(n_dot_w, dtype=np.float64)
    return n_dot_w / (n_dot_w * (1.0 - k) + k)


def smith_g(geom: ShadingGeometry, roughness) -> np.ndarray:
    k = smith_k(roughness)
    return smith_g1(dot(geom.n, geom.wo), k) * smith_g1(dot(geom.n, geom.wi), k)


def _specular_parts(geom: ShadingGeometry, m: MaterialSample = None):
    """Common factors of the Cook-Torrance quotient; returns None-equivalent
    zeros below the horizon via the `valid` mask."""
    n_dot_i = dot(geom.n, geom.wi)
    n_dot_o = dot(geom.n, geom.wo)
    valid = (n_dot_i > 0.0) & (n_dot_o > 0.0)
    n_dot_i_s = np.where(valid, n_dot_i, 1.0)
    n_dot_o_s = np.where(valid, n_dot_o, 1.0)
    h = _safe_half(geom.wi, geom.wo)
    n_dot_h = np.clip(dot(geom.n, h), 0.0, 1.0)
    o_dot_h = np.clip(dot(geom.wo, h), 0.0, 1.0)
    return valid, n_dot_i_s, n_dot_o_s, n_dot_h, o_dot_h


def _safe_half(wi, wo):
    s = np.asarray(wi, dtype=np.float64) + wo
    n = np.sqrt(np.sum(s * s, axis=-1))
    return s / np.maximum(n, 1e-12)[..., None]


def diffuse_eval(m: MaterialSample) -> np.ndarray:
    """Lambertian lobe, scaled so pure metals have no diffuse component."""
    return m.albedo * (1.0 - m.metallic[..., None]) / np.pi


def specular_eval(geom: ShadingGeometry, m: MaterialSample) -> np.ndarray:
    """Cook-Torrance quotient D*F*G / (4 (n.wo)(n.wi)), zero below horizon."""
    valid, n_dot_i, n_dot_o, n_dot_h, o_dot_h = _specular_parts(geom, m)
    a2 = alpha_from_roughness(m.roughness) ** 2
    d = ggx_ndf(n_dot_h, a2)
    f = fresnel_schlick(o_dot_h, f0_from_material(m))
    k = smith_k(m.roughness)
    g = smith_g1(n_dot_o, k) * smith_g1(n_dot_i, k)
    spec = f * (d * g / (4.0 * n_dot_o * n_dot_i))[..., None]
    return np.where(np.asarray(valid)[..., None], spec, 0.0)


def brdf_eval(geom: ShadingGeometry, m: MaterialSample) -> np.ndarray:
    """Diffuse + specular BRDF value (..., 3). Zero outside the upper hemisphere."""
    valid, n_dot_i, n_dot_o, _, _ = _specular_parts(geom, m)
    out = diffuse_eval(m) + specular_eval(geom, m)
    return np.where(np.asarray(valid)[..., None], out, 0.0)


def eval_parts_with_grad(geom: ShadingGeometry, m: MaterialSample):
    """One-pass evaluation of both lobes and all parameter derivatives.

    Returns a dict with 'diffuse', 'specular' values and the partials
    'd*_albedo', 'd*_metallic', 'dspec_roughness', all (..., 3) and zeroed
    below the horizon. Shared by brdf_grad and the inverse solver.
    """
    valid, n_dot_i, n_dot_o, n_dot_h, o_dot_h = _specular_parts(geom, m)
    r = np.maximum(m.roughness, ROUGH_MIN)
    a2 = r**4
    u = n_dot_h**2 * (a2 - 1.0) + 1.0
    d = a2 / (np.pi * u**2)
    dd_da2 = (u - 2.0 * a2 * n_dot_h**2) / (np.pi * u**3)
    da2_dr = np.where(m.roughness > ROUGH_MIN, 4.0 * r**3, 0.0)

    k = r**2 / 2.0
    dk_dr = np.where(m.roughness > ROUGH_MIN, r, 0.0)
    g1_i = smith_g1(n_dot_i, k)
    g1_o = smith_g1(n_dot_o, k)
    g = g1_i * g1_o
    # dG1/dk = -x(1-x) / (x(1-k)+k)^2
    dg1_i = -n_dot_i * (1.0 - n_dot_i) / (n_dot_i * (1.0 - k) + k) ** 2
    dg1_o = -n_dot_o * (1.0 - n_dot_o) / (n_dot_o * (1.0 - k) + k) ** 2
    dg_dr = (dg1_i * g1_o + g1_i * dg1_o) * dk_dr

    t = (1.0 - o_dot_h) ** 5
    f0 = f0_from_material(m)
    f = f0 * (1.0 - t[..., None]) + t[..., None]
    quot = 1.0 / (4.0 * n_dot_o * n_dot_i)

    met = m.metallic[..., None]
    # specular chain: F0 = (1-m)*0.04 + m*albedo
    dgq = (d * g * quot)[..., None]
    dspec_albedo = dgq * (1.0 - t[..., None]) * met
    df0_dm = m.albedo - DIELECTRIC_F0
    dspec_metallic = dgq * (1.0 - t[..., None]) * df0_dm
    dspec_rough = ((dd_da2 * da2_dr * g + d * dg_dr) * quot)[..., None] * f

    vm = np.asarray(valid)[..., None]
    return {
        "diffuse": np.where(vm, m.albedo * (1.0 - met) / np.pi, 0.0),
        "specular": np.where(vm, f * (d * g * quot)[..., None], 0.0),
        "ddiff_albedo": np.where(vm, (1.0 - met) / np.pi * np.ones_like(m.albedo), 0.0),
        "ddiff_metallic": np.where(vm, -m.albedo / np.pi, 0.0),
        "dspec_albedo": np.where(vm, dspec_albedo, 0.0),
        "dspec_metallic": np.where(vm, dspec_metallic, 0.0),
        "dspec_roughness": np.where(vm, dspec_rough, 0.0),
    }


@dataclass(frozen=True)
class SpecularGeometry:
    """Material-independent factors of the Cook-Torrance quotient for a
    fixed set of incident directions, shape (P, L). Precomputing these once
    lets repeated evaluations (one per optimizer step) skip all dot products
    and the half-vector normalization."""

    n_dot_i: np.ndarray
    n_dot_o: np.ndarray
    nh2: np.ndarray
    fresnel_t: np.ndarray
    quot: np.ndarray


def specular_geometry(geom: ShadingGeometry) -> SpecularGeometry:
    """Fold a ShadingGeometry into the reusable scalar terms; horizon
    culling is baked into quot (zero below the horizon)."""
    valid, n_dot_i, n_dot_o, n_dot_h, o_dot_h = _specular_parts(geom, None)
    quot = np.where(valid, 1.0 / (4.0 * n_dot_o * n_dot_i), 0.0)
    return SpecularGeometry(
        n_dot_i=n_dot_i, n_dot_o=n_dot_o, nh2=n_dot_h**2,
        fresnel_t=(1.0 - o_dot_h) ** 5, quot=quot,
    )


def specular_weighted_sum(sg: SpecularGeometry, m: MaterialSample,
                          weights: np.ndarray, need_grad: bool) -> dict:
    """Specular lobe contracted against per-sample weights.

    sg holds (P, L) geometry terms, m holds per-pixel materials (albedo
    (P, 3), metallic/roughness (P,)), weights is (P, L, 3). Returns
    sum_L f_s * weights as 'specular' (P, 3), plus the already-contracted
    partials when need_grad is set. The color axis only enters through
    Fresnel, so everything reduces to scalar (P, L) work plus a handful of
    (P, L)x(P, L, 3) contractions.
    """
    r = np.maximum(m.roughness, ROUGH_MIN)[:, None]
    a2 = r**4
    u = sg.nh2 * (a2 - 1.0) + 1.0
    d = a2 / (np.pi * u**2)
    k = r**2 / 2.0
    g1_i = sg.n_dot_i / (sg.n_dot_i * (1.0 - k) + k)
    g1_o = sg.n_dot_o / (sg.n_dot_o * (1.0 - k) + k)
    g = g1_i * g1_o
    s = d * g * sg.quot
    one_minus_t = 1.0 - sg.fresnel_t
    # f = F0 (1-t) + t with F0 per pixel, so the L-sum factors through A, B
    a = np.einsum("pl,plc->pc", s * one_minus_t, weights)
    b = np.einsum("pl,plc->pc", s * sg.fresnel_t, weights)
    f0 = f0_from_material(m)
    out = {"specular": f0 * a + b}
    if not need_grad:
        return out
    dd_da2 = (u - 2.0 * a2 * sg.nh2) / (np.pi * u**3)
    da2_dr = np.where(m.roughness[:, None] > ROUGH_MIN, 4.0 * r**3, 0.0)
    dk_dr = np.where(m.roughness[:, None] > ROUGH_MIN, r, 0.0)
    dg1_i = -sg.n_dot_i * (1.0 - sg.n_dot_i) / (sg.n_dot_i * (1.0 - k) + k) ** 2
    dg1_o = -sg.n_dot_o * (1.0 - sg.n_dot_o) / (sg.n_dot_o * (1.0 - k) + k) ** 2
    s_r = (dd_da2 * da2_dr * g + d * (dg1_i * g1_o + g1_i * dg1_o) * dk_dr) * sg.quot
    c = np.einsum("pl,plc->pc", s_r * one_minus_t, weights)
    e = np.einsum("pl,plc->pc", s_r * sg.fresnel_t, weights)
    met = m.metallic[:, None]
    out["dspec_albedo"] = met * a
    out["dspec_metallic"] = (m.albedo - DIELECTRIC_F0) * a
    out["dspec_roughness"] = f0 * c + e
    return out


def brdf_grad(geom: ShadingGeometry, m: MaterialSample):
    """Partials of brdf_eval w.r.t. (albedo, metallic, roughness).

    Returns (d_albedo, d_metallic, d_roughness), each (..., 3); d_albedo is
    the diagonal: output channel c depends only on albedo channel c.
    Roughness derivatives are zero once the clamp floor is active.
    """
    parts = eval_parts_with_grad(geom, m)
    return (
        parts["ddiff_albedo"] + parts["dspec_albedo"],
        parts["ddiff_metallic"] + parts["dspec_metallic"],
        parts["dspec_roughness"],
    )


def sample_ggx(n: np.ndarray, wo: np.ndarray, roughness, u1, u2):
    """Importance-sample incident directions by the GGX half-vector density.

    Samples h proportional to D(h)(n.h), reflects wo about h.
    Returns (wi, pdf); pdf = D (n.h) / (4 (wo.h)), zero for samples that land
    below the horizon (caller discards).
    """
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    alpha = np.maximum(np.asarray(roughness, dtype=np.float64), ROUGH_MIN) ** 2
    a2 = alpha**2
    cos_h = np.sqrt(np.clip((1.0 - u1) / (1.0 + (a2 - 1.0) * u1), 0.0, 1.0))
    sin_h = np.sqrt(np.clip(1.0 - cos_h**2, 0.0, 1.0))
    phi = 2.0 * np.pi * u2
    t, b = orthonormal_basis(n)
    h = (
        (sin_h * np.cos(phi))[..., None] * t
        + (sin_h * np.sin(phi))[..., None] * b
        + cos_h[..., None] * n
    )
    wi = reflect(wo, h)
    n_dot_h = np.clip(dot(n, h), 0.0, 1.0)
    o_dot_h = dot(wo, h)
    below = (dot(n, wi) <= 0.0) | (o_dot_h <= 1e-9)
    pdf = np.where(
        below, 0.0, ggx_ndf(n_dot_h, a2) * n_dot_h / (4.0 * np.maximum(o_dot_h, 1e-9))
    )
    return wi, pdf
