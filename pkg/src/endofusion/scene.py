"""Procedural colon-like tube scenes with an exact signed-distance oracle.

A scene is a tube swept along a cubic-spline centerline. The wall radius varies
smoothly along arclength and carries a gentle corrugation (semilunar-fold style
ridges). The signed distance is positive in the lumen interior, negative inside
the wall material, and zero on the surface, which makes the scene double as the
ground-truth oracle for rendering, normals, and reconstruction error.

Randomization ranges are deliberately conservative: ridge and modulation slopes
are kept small enough that the field stays within 5% of a true distance near
the surface, which sphere tracing and the eikonal checks rely on.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .geometry import Pose, so3_exp

DEFAULT_RADIUS = 0.0125  # lumen base radius, meters (~ human colon)
_EXTENSION = 0.35  # straight continuation beyond the spline ends, meters
_COARSE_SAMPLES = 1024
_NEWTON_ITERS = 6
_TEXTURE_CONTRAST = 0.45


# ---------------------------------------------------------------------------
# Deterministic value noise (integer-lattice hashing, reproducible everywhere)
# ---------------------------------------------------------------------------

_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xC2B2AE3D27D4EB4F)
_C3 = np.uint64(0x165667B19E3779F9)
_C4 = np.uint64(0x27D4EB2F165667C5)


def _mix(h: np.ndarray) -> np.ndarray:
    h = h ^ (h >> np.uint64(33))
    h = h * _C2
    h = h ^ (h >> np.uint64(29))
    h = h * _C3
    h = h ^ (h >> np.uint64(32))
    return h


def _lattice_value(ix: np.ndarray, iy: np.ndarray, iz: np.ndarray, seed: np.uint64) -> np.ndarray:
    """Hash lattice coordinates to values in [0, 1)."""
    h = ix * _C1 ^ iy * _C2 ^ iz * _C3 ^ seed * _C4
    h = _mix(h)
    return (h >> np.uint64(40)).astype(np.float64) / float(1 << 24)


def value_noise(points: np.ndarray, seed: int) -> np.ndarray:
    """Trilinear value noise in [0, 1] at points of shape (..., 3)."""
    points = np.asarray(points, dtype=np.float64)
    with np.errstate(over="ignore"):
        seed64 = np.uint64(np.int64(seed).view(np.uint64) if seed < 0 else seed)
        p0 = np.floor(points)
        f = points - p0
        i = p0.astype(np.int64).view(np.uint64)
        ix, iy, iz = i[..., 0], i[..., 1], i[..., 2]
        one = np.uint64(1)
        # Smoothstep fade keeps the field C1 across cell boundaries.
        t = f * f * (3.0 - 2.0 * f)
        tx, ty, tz = t[..., 0], t[..., 1], t[..., 2]
        v000 = _lattice_value(ix, iy, iz, seed64)
        v100 = _lattice_value(ix + one, iy, iz, seed64)
        v010 = _lattice_value(ix, iy + one, iz, seed64)
        v110 = _lattice_value(ix + one, iy + one, iz, seed64)
        v001 = _lattice_value(ix, iy, iz + one, seed64)
        v101 = _lattice_value(ix + one, iy, iz + one, seed64)
        v011 = _lattice_value(ix, iy + one, iz + one, seed64)
        v111 = _lattice_value(ix + one, iy + one, iz + one, seed64)
    v00 = v000 + (v100 - v000) * tx
    v10 = v010 + (v110 - v010) * tx
    v01 = v001 + (v101 - v001) * tx
    v11 = v011 + (v111 - v011) * tx
    v0 = v00 + (v10 - v00) * ty
    v1 = v01 + (v11 - v01) * ty
    return v0 + (v1 - v0) * tz


def fbm_noise(points: np.ndarray, octaves: int, seed: int) -> np.ndarray:
    """Fractional-Brownian stack of value noise, normalized to [0, 1]."""
    points = np.asarray(points, dtype=np.float64)
    total = np.zeros(points.shape[:-1])
    weight_sum = 0.0
    w = 1.0
    for k in range(octaves):
        total += w * value_noise(points * (2.0**k), seed + k)
        weight_sum += w
        w *= 0.5
    if weight_sum == 0.0:
        return np.full(points.shape[:-1], 0.5)
    return total / weight_sum


# ---------------------------------------------------------------------------
# Scene types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AppearanceParams:
    """Surface appearance: albedo, procedural texture, highlights, vignette."""

    base_albedo: tuple[float, float, float] = (0.72, 0.30, 0.26)
    texture_octaves: int = 5
    texture_scale: float = 260.0
    specular_strength: float = 0.0
    specular_exponent: float = 24.0
    vignette_strength: float = 0.0

    def __post_init__(self) -> None:
        if any(not (0.0 <= c <= 1.0) for c in self.base_albedo):
            raise ValueError(f"base_albedo outside [0,1]: {self.base_albedo}")
        if self.texture_octaves < 0 or int(self.texture_octaves) != self.texture_octaves:
            raise ValueError("texture_octaves must be a non-negative integer")
        if self.texture_scale <= 0:
            raise ValueError("texture_scale must be positive")
        if not (0.0 <= self.specular_strength <= 1.0):
            raise ValueError("specular_strength outside [0,1]")
        if self.specular_exponent <= 1.0:
            raise ValueError("specular_exponent must exceed 1")
        if not (0.0 <= self.vignette_strength <= 1.0):
            raise ValueError("vignette_strength outside [0,1]")

    def texture_seed(self) -> int:
        """Lattice seed derived from the texture parameters themselves."""
        bits = np.float64(self.texture_scale).view(np.uint64)
        with np.errstate(over="ignore"):
            mixed = _mix(np.uint64(bits) ^ np.uint64(self.texture_octaves) * _C1)
        return int(mixed & np.uint64(0x7FFFFFFF))


def albedo_at(points: np.ndarray, app: AppearanceParams) -> np.ndarray:
    """Textured albedo at world points of shape (..., 3); values may exceed [0,1] slightly."""
    base = np.asarray(app.base_albedo, dtype=np.float64)
    if app.texture_octaves == 0:
        return np.broadcast_to(base, points.shape[:-1] + (3,)).copy()
    f = fbm_noise(np.asarray(points) * app.texture_scale, app.texture_octaves, app.texture_seed())
    factor = 1.0 + _TEXTURE_CONTRAST * (2.0 * f - 1.0)
    return base * factor[..., None]


@dataclass(eq=False)
class ColonScene:
    """Tube scene: spline centerline, radius profile, ridge corrugation, appearance.

    ``control_points`` must advance monotonically; the spline is parameterized
    by cumulative chord length, which stays within a fraction of a percent of
    true arclength for the gentle curvatures the builders produce.
    """

    control_points: np.ndarray
    r0: float = DEFAULT_RADIUS
    radius_mod_amp: float = 0.0  # fractional modulation of r0
    radius_mod_period: float = 0.15  # meters
    radius_mod_phase: float = 0.0
    ridge_amplitude: float = 0.0  # meters
    ridge_angular_freq: int = 0  # ridges per revolution
    ridge_axial_freq: float = 0.0  # ridges per meter
    appearance: AppearanceParams = field(default_factory=AppearanceParams)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        cp = np.asarray(self.control_points, dtype=np.float64)
        if cp.ndim != 2 or cp.shape[1] != 3 or cp.shape[0] < 2:
            raise ValueError("control_points must have shape (K>=2, 3)")
        self.control_points = cp
        chord = np.linalg.norm(np.diff(cp, axis=0), axis=1)
        if np.any(chord <= 0):
            raise ValueError("control points must be strictly advancing")
        knots = np.concatenate([[0.0], np.cumsum(chord)])
        self.length = float(knots[-1])
        self._spline = CubicSpline(knots, cp, axis=0, bc_type="natural")
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)
        xy = cp[:, :2]
        self._straight = bool(np.all(xy == xy[0]) and np.all(np.diff(cp[:, 2]) > 0))
        s = np.linspace(-_EXTENSION, self.length + _EXTENSION, _COARSE_SAMPLES)
        self._coarse_s = s
        self._coarse_tree = cKDTree(self.centerline(s))
        if self.max_radius() <= self.ridge_amplitude:
            raise ValueError("ridge amplitude too large for radius profile")
        if self.min_wall_radius() <= 0:
            raise ValueError("radius profile collapses to zero")

    # -- centerline ---------------------------------------------------------

    def centerline(self, s: np.ndarray) -> np.ndarray:
        """Centerline point at parameter s; linear continuation beyond the ends."""
        s = np.asarray(s, dtype=np.float64)
        sc = np.clip(s, 0.0, self.length)
        pts = self._spline(sc)
        d = (s - sc)[..., None]
        return pts + d * (self._d1(sc) / np.linalg.norm(self._d1(sc), axis=-1, keepdims=True))

    def _eval(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(point, first, second derivative) with straight continuation outside [0, L]."""
        s = np.asarray(s, dtype=np.float64)
        sc = np.clip(s, 0.0, self.length)
        c = self._spline(sc)
        d1 = self._d1(sc)
        d2 = self._d2(sc)
        outside = s != sc
        if np.any(outside):
            speed = np.linalg.norm(d1, axis=-1, keepdims=True)
            c = c + np.where(outside[..., None], (s - sc)[..., None] * d1 / speed, 0.0)
            d2 = np.where(outside[..., None], 0.0, d2)
        return c, d1, d2

    def frame(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal frame (e1, e2, tangent) at parameter s.

        The reference axis is world-x; builders keep tangents near world-z so
        the frame never degenerates.
        """
        _, d1, _ = self._eval(s)
        t = d1 / np.linalg.norm(d1, axis=-1, keepdims=True)
        ref = np.zeros_like(t)
        ref[..., 0] = 1.0
        e1 = ref - (t[..., 0])[..., None] * t
        n1 = np.linalg.norm(e1, axis=-1, keepdims=True)
        if np.any(n1 < 1e-6):
            raise ValueError("centerline tangent aligned with the reference axis")
        e1 = e1 / n1
        e2 = np.cross(t, e1)
        return e1, e2, t

    def nearest_param(self, points: np.ndarray, s_init: np.ndarray | None = None) -> np.ndarray:
        """Parameter of the nearest centerline point for each query point."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self._straight:
            return points[:, 2].copy()
        if s_init is None:
            _, idx = self._coarse_tree.query(points)
            s = self._coarse_s[idx]
        else:
            s = np.array(s_init, dtype=np.float64, copy=True)
        lo, hi = -_EXTENSION, self.length + _EXTENSION
        for _ in range(_NEWTON_ITERS):
            c, d1, d2 = self._eval(s)
            r = points - c
            g = np.einsum("ij,ij->i", r, d1)
            gp = -np.einsum("ij,ij->i", d1, d1) + np.einsum("ij,ij->i", r, d2)
            gp = np.where(np.abs(gp) < 1e-9, -1.0, gp)
            s = np.clip(s - g / gp, lo, hi)
        return s

    # -- radius profile -----------------------------------------------------

    def base_radius(self, s: np.ndarray) -> np.ndarray:
        """Smooth base radius at arclength s (ridges excluded)."""
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.length)
        if self.radius_mod_amp == 0.0:
            return np.full_like(s, self.r0)
        return self.r0 * (
            1.0
            + self.radius_mod_amp
            * np.sin(2.0 * np.pi * s / self.radius_mod_period + self.radius_mod_phase)
        )

    def local_radius(self, s: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Wall radius including ridge corrugation."""
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.length)
        r = self.base_radius(s)
        if self.ridge_amplitude > 0.0:
            r = r + self.ridge_amplitude * np.cos(self.ridge_angular_freq * theta) * np.cos(
                2.0 * np.pi * self.ridge_axial_freq * s
            )
        return r

    def max_radius(self) -> float:
        return self.r0 * (1.0 + abs(self.radius_mod_amp)) + self.ridge_amplitude

    def min_wall_radius(self) -> float:
        return self.r0 * (1.0 - abs(self.radius_mod_amp)) - self.ridge_amplitude

    def min_curvature_radius(self, n_samples: int = 512) -> float:
        """Minimum osculating-circle radius of the centerline, by dense sampling."""
        s = np.linspace(0.0, self.length, n_samples)
        d1 = self._d1(s)
        d2 = self._d2(s)
        speed = np.linalg.norm(d1, axis=1)
        kappa = np.linalg.norm(np.cross(d1, d2), axis=1) / np.maximum(speed**3, 1e-12)
        kmax = kappa.max()
        return float(1.0 / kmax) if kmax > 0 else np.inf

    def surface_point(self, s: float, theta: float) -> np.ndarray:
        """Exact point on the wall surface at (arclength, azimuth)."""
        sa = np.atleast_1d(np.float64(s))
        e1, e2, _ = self.frame(sa)
        c, _, _ = self._eval(sa)
        r = self.local_radius(sa, np.atleast_1d(theta))
        p = c + r[:, None] * (np.cos(theta) * e1 + np.sin(theta) * e2)
        return p[0]


# ---------------------------------------------------------------------------
# Signed distance field
# ---------------------------------------------------------------------------


def _sdf_and_param(
    scene: ColonScene, points: np.ndarray, s_init: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Signed distance plus the nearest centerline parameter (for warm starts)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if scene._straight:
        origin = scene.control_points[0]
        s = pts[:, 2] - origin[2]
        dx = pts[:, 0] - origin[0]
        dy = pts[:, 1] - origin[1]
        dist = np.hypot(dx, dy)
        theta = np.arctan2(dy, dx)
    else:
        s = scene.nearest_param(pts, s_init=s_init)
        c, _, _ = scene._eval(s)
        e1, e2, _ = scene.frame(s)
        rv = pts - c
        dist = np.linalg.norm(rv, axis=1)
        theta = np.arctan2(np.einsum("ij,ij->i", rv, e2), np.einsum("ij,ij->i", rv, e1))
    sdf = scene.local_radius(s, theta) - dist
    return sdf, s


def scene_sdf(scene: ColonScene, points: np.ndarray) -> np.ndarray:
    """Signed distance: positive in the lumen interior, negative in the wall.

    Accepts a single 3-vector or an array of shape (..., 3); returns a scalar
    or an array of shape (...).
    """
    points = np.asarray(points, dtype=np.float64)
    single = points.ndim == 1
    flat = points.reshape(-1, 3)
    if not np.all(np.isfinite(flat)):
        raise ValueError("scene_sdf requires finite points")
    sdf, _ = _sdf_and_param(scene, flat)
    if single:
        return float(sdf[0])
    return sdf.reshape(points.shape[:-1])


def sdf_gradient(scene: ColonScene, points: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the signed distance, shape (..., 3)."""
    points = np.asarray(points, dtype=np.float64)
    single = points.ndim == 1
    flat = points.reshape(-1, 3)
    offsets = np.eye(3) * h
    probes = np.concatenate([flat + offsets[k] for k in range(3)] + [flat - offsets[k] for k in range(3)])
    vals, _ = _sdf_and_param(scene, probes)
    n = flat.shape[0]
    plus = vals[: 3 * n].reshape(3, n)
    minus = vals[3 * n :].reshape(3, n)
    grad = ((plus - minus) / (2.0 * h)).T
    if single:
        return grad[0]
    return grad.reshape(points.shape)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

_DIFFICULTIES = ("straight", "curved", "randomized")
_SCENE_LENGTH = 0.4

# Red-pink dominant albedo ranges for appearance randomization.
_ALBEDO_R = (0.5, 0.9)
_ALBEDO_G = (0.1, 0.5)
_ALBEDO_B = (0.1, 0.5)


def _sample_appearance(rng: np.random.Generator, *, glossy: bool) -> AppearanceParams:
    albedo = (
        float(rng.uniform(*_ALBEDO_R)),
        float(rng.uniform(*_ALBEDO_G)),
        float(rng.uniform(*_ALBEDO_B)),
    )
    return AppearanceParams(
        base_albedo=albedo,
        texture_octaves=int(rng.integers(3, 7)),
        texture_scale=float(rng.uniform(160.0, 400.0)),
        specular_strength=float(rng.uniform(0.3, 0.9)) if glossy else 0.0,
        specular_exponent=float(rng.uniform(16.0, 64.0)),
        vignette_strength=float(rng.uniform(0.0, 0.35)) if glossy else 0.0,
    )


def _curved_control_points(rng: np.random.Generator) -> np.ndarray:
    z = np.linspace(0.0, _SCENE_LENGTH, 33)
    ax = rng.uniform(0.003, 0.008)
    ay = rng.uniform(0.003, 0.008)
    px = rng.uniform(0.20, 0.30)
    py = rng.uniform(0.20, 0.30)
    phx = rng.uniform(0.0, 2.0 * np.pi)
    phy = rng.uniform(0.0, 2.0 * np.pi)
    x = ax * np.sin(2.0 * np.pi * z / px + phx)
    y = ay * np.sin(2.0 * np.pi * z / py + phy)
    # Remove the lateral offset/slope at z=0 so trajectories start near the origin axis.
    x -= x[0]
    y -= y[0]
    return np.column_stack([x, y, z])


def build_scene(seed: int, difficulty: str) -> ColonScene:
    """Deterministically build a scene of the requested difficulty.

    straight    — canonical cylinder (radius 0.0125 m, no ridges); textured.
    curved      — gently curving centerline, radius modulation, soft ridges.
    randomized  — curved plus glossy appearance randomization.
    """
    if difficulty not in _DIFFICULTIES:
        raise ValueError(f"difficulty must be one of {_DIFFICULTIES}, got {difficulty!r}")
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFF, _DIFFICULTIES.index(difficulty)])
    if difficulty == "straight":
        cp = np.column_stack(
            [np.zeros(9), np.zeros(9), np.linspace(0.0, _SCENE_LENGTH, 9)]
        )
        scene = ColonScene(
            control_points=cp,
            r0=DEFAULT_RADIUS,
            appearance=_sample_appearance(rng, glossy=False),
            rng_seed=seed,
        )
    else:
        glossy = difficulty == "randomized"
        scene = ColonScene(
            control_points=_curved_control_points(rng),
            r0=DEFAULT_RADIUS,
            radius_mod_amp=float(rng.uniform(0.04, 0.10)),
            radius_mod_period=float(rng.uniform(0.12, 0.22)),
            radius_mod_phase=float(rng.uniform(0.0, 2.0 * np.pi)),
            ridge_amplitude=float(rng.uniform(0.00025, 0.00045)),
            ridge_angular_freq=int(rng.integers(3, 7)),
            ridge_axial_freq=float(rng.uniform(6.0, 12.0)),
            appearance=_sample_appearance(rng, glossy=glossy),
            rng_seed=seed,
        )
    _validate_scene(scene)
    return scene


def _validate_scene(scene: ColonScene) -> None:
    """Check the geometric invariants by dense sampling; raise on violation."""
    if scene.min_wall_radius() <= 0:
        raise ValueError("wall radius reaches zero")
    if scene.ridge_amplitude > 0 and scene.min_wall_radius() <= scene.ridge_amplitude:
        raise ValueError("ridge amplitude exceeds minimum wall radius")
    r_curv = scene.min_curvature_radius()
    if r_curv <= 2.0 * scene.max_radius():
        raise ValueError(
            f"centerline curvature too tight: min curvature radius {r_curv:.4f} m "
            f"vs 2*max radius {2.0 * scene.max_radius():.4f} m"
        )


def randomize_appearance(scene: ColonScene, seed: int) -> ColonScene:
    """Resample appearance only; geometry fields are reused unchanged."""
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFF, 97])
    glossy = scene.appearance.specular_strength > 0.0
    return dataclasses.replace(scene, appearance=_sample_appearance(rng, glossy=glossy))


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

_MAX_JITTER_DEG = 0.9  # keeps consecutive relative rotations below the 2 deg bound
_MAX_JITTER_TRANS_FRAC = 0.1  # of r0
_LUMEN_MARGIN_FRAC = 0.1  # of r0: minimum SDF at every camera center


def generate_trajectory(
    scene: ColonScene,
    n_frames: int,
    advance_per_frame: float,
    jitter_seed: int | None = None,
    *,
    start_s: float = 0.03,
) -> list[Pose]:
    """Camera poses advancing along the centerline, optical axis along the tangent.

    ``jitter_seed=None`` disables perturbation entirely. With jitter enabled,
    per-frame rotation stays below 0.9 deg and translation below 0.1*r0, so
    consecutive relative rotations remain below 2 deg.

    Raises ValueError if the trajectory would leave the defined lumen.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if advance_per_frame < 0:
        raise ValueError("advance_per_frame must be >= 0")
    end_s = start_s + (n_frames - 1) * advance_per_frame
    if end_s > scene.length:
        raise ValueError(
            f"trajectory would exit the lumen: needs {end_s:.3f} m of centerline, "
            f"scene has {scene.length:.3f} m"
        )
    rng = np.random.default_rng(jitter_seed) if jitter_seed is not None else None
    s_vals = start_s + advance_per_frame * np.arange(n_frames)
    e1s, e2s, ts = scene.frame(s_vals)
    centers, _, _ = scene._eval(s_vals)
    poses: list[Pose] = []
    for i in range(n_frames):
        R = np.stack([e1s[i], e2s[i], ts[i]])  # rows: camera axes in world coords
        C = centers[i]
        if rng is not None:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(0.0, np.deg2rad(_MAX_JITTER_DEG))
            R = so3_exp(axis * angle) @ R
            offset_dir = rng.normal(size=3)
            offset_dir /= np.linalg.norm(offset_dir)
            offset_mag = _MAX_JITTER_TRANS_FRAC * scene.r0 * rng.uniform(0.0, 1.0) ** (1.0 / 3.0)
            C = C + offset_mag * offset_dir
        if scene_sdf(scene, C) <= _LUMEN_MARGIN_FRAC * scene.r0:
            raise ValueError(f"trajectory would exit the lumen at frame {i}")
        poses.append(Pose(rotation=R, translation=-R @ C))
    return poses
