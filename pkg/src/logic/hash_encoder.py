"""
Tri-plane multiresolution hash encoder.

A position is projected onto the xy, yz and xz planes. Each plane holds L levels of
2-D grids whose resolutions grow geometrically from base_resolution to
max_resolution; the features of the four grid vertices around the projected point
are bilinearly interpolated. Coarse levels index their table densely, fine levels
through the spatial hash (i * 1) xor (j * 2654435761) mod T.
"""

from dataclasses import dataclass

import numpy as np

from global_state import state
from errors import ContractViolation
from data_types.run_config import EncoderConfig

PLANES = ((0, 1), (1, 2), (0, 2))
PLANE_NAMES = ("xy", "yz", "xz")
HASH_PRIMES = (np.uint64(1), np.uint64(2654435761))


@dataclass
class EncodingCache:
    """Interpolation state kept for the backward pass."""
    indices: np.ndarray   # (3, L, 4, N) table rows of the four corners
    weights: np.ndarray   # (3, L, 4, N) bilinear weights
    frac: np.ndarray      # (3, L, N, 2) position inside the cell
    inside: np.ndarray    # (N, 3) bool, coordinate not clamped to the box
    n: int


def level_resolutions(cfg: EncoderConfig) -> np.ndarray:
    if cfg.levels == 1:
        return np.array([cfg.base_resolution], dtype=np.int64)
    growth = np.exp((np.log(cfg.max_resolution) - np.log(cfg.base_resolution)) / (cfg.levels - 1))
    return np.floor(cfg.base_resolution * growth ** np.arange(cfg.levels) + 1e-9).astype(np.int64)


class TriPlaneHashEncoder:
    """
    Learnable spatial feature field.

    Attributes:
        cfg (EncoderConfig): Sizes
        tables (np.ndarray): (3, L, T, F) feature tables
        bbox_min, bbox_max (np.ndarray): (3,) box used to normalize positions
        resolutions (np.ndarray): (L,) grid resolution per level
    """

    def __init__(self, cfg: EncoderConfig, bbox_min, bbox_max, seed: int = 0):
        self.cfg = cfg
        self.bbox_min = np.asarray(bbox_min, dtype=np.float64)
        self.bbox_max = np.asarray(bbox_max, dtype=np.float64)
        if np.any(self.bbox_max <= self.bbox_min):
            state.logger.error(f"Encoder bounding box is empty: {self.bbox_min} .. {self.bbox_max}")
            raise ContractViolation(f"Encoder bounding box is empty: {self.bbox_min} .. {self.bbox_max}")
        self.table_size = 1 << cfg.log2_table_size
        self.resolutions = level_resolutions(cfg)
        rng = np.random.default_rng(seed)
        self.tables = rng.uniform(
            -cfg.init_range, cfg.init_range, size=(3, cfg.levels, self.table_size, cfg.features)
        )

    @property
    def output_dim(self) -> int:
        return 3 * self.cfg.levels * self.cfg.features

    @staticmethod
    def from_points(cfg: EncoderConfig, positions: np.ndarray, seed: int = 0, margin: float = 0.1) -> "TriPlaneHashEncoder":
        """Encoder whose box is the bounding box of the points grown by `margin` of its size."""
        lo = positions.min(axis=0)
        hi = positions.max(axis=0)
        pad = np.maximum((hi - lo) * margin, 1e-3)
        return TriPlaneHashEncoder(cfg, lo - pad, hi + pad, seed)

    def params(self) -> dict[str, np.ndarray]:
        return {"tables": self.tables}

    def _corner_indices(self, ix: np.ndarray, iy: np.ndarray, resolution: int) -> np.ndarray:
        side = resolution + 1
        if side * side <= self.table_size:
            return ix + iy * side
        h = (ix.astype(np.uint64) * HASH_PRIMES[0]) ^ (iy.astype(np.uint64) * HASH_PRIMES[1])
        return (h % np.uint64(self.table_size)).astype(np.int64)

    def encode(self, positions: np.ndarray) -> tuple[np.ndarray, EncodingCache]:
        """
        Encode positions.

        Args:
            positions (np.ndarray): (N, 3) world positions; outside the box they are clamped

        Returns:
            tuple: features (N, 3 * L * F) and the cache for backward
        """
        positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        n = positions.shape[0]
        levels, feats = self.cfg.levels, self.cfg.features
        unit = (positions - self.bbox_min) / (self.bbox_max - self.bbox_min)
        inside = (unit > 0.0) & (unit < 1.0)
        unit = np.clip(unit, 0.0, 1.0)

        out = np.empty((n, 3, levels, feats))
        indices = np.empty((3, levels, 4, n), dtype=np.int64)
        weights = np.empty((3, levels, 4, n))
        frac_all = np.empty((3, levels, n, 2))
        for p, (a, b) in enumerate(PLANES):
            uv = unit[:, [a, b]]
            for level, resolution in enumerate(self.resolutions):
                grid = uv * resolution
                cell = np.clip(np.floor(grid).astype(np.int64), 0, resolution - 1)
                frac = grid - cell
                fx, fy = frac[:, 0], frac[:, 1]
                ix, iy = cell[:, 0], cell[:, 1]
                corners = (
                    self._corner_indices(ix, iy, resolution),
                    self._corner_indices(ix + 1, iy, resolution),
                    self._corner_indices(ix, iy + 1, resolution),
                    self._corner_indices(ix + 1, iy + 1, resolution),
                )
                w = ((1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy)
                table = self.tables[p, level]
                acc = np.zeros((n, feats))
                for c in range(4):
                    indices[p, level, c] = corners[c]
                    weights[p, level, c] = w[c]
                    acc += w[c][:, None] * table[corners[c]]
                out[:, p, level] = acc
                frac_all[p, level] = frac
        cache = EncodingCache(indices=indices, weights=weights, frac=frac_all, inside=inside, n=n)
        return out.reshape(n, -1), cache

    def backward(self, cache: EncodingCache, d_features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Args:
            cache (EncodingCache): From encode
            d_features (np.ndarray): (N, 3 * L * F) gradient w.r.t. the encoding

        Returns:
            tuple: dL/d tables (3, L, T, F) and dL/d positions (N, 3)
        """
        n = cache.n
        levels, feats = self.cfg.levels, self.cfg.features
        if d_features.shape != (n, self.output_dim):
            raise ContractViolation(f"Encoder gradient has shape {d_features.shape}, expected {(n, self.output_dim)}")
        d_feat = d_features.reshape(n, 3, levels, feats)
        d_tables = np.zeros_like(self.tables)
        d_unit = np.zeros((n, 3))
        for p, (a, b) in enumerate(PLANES):
            for level, resolution in enumerate(self.resolutions):
                g = d_feat[:, p, level]
                table = self.tables[p, level]
                idx = cache.indices[p, level]
                for c in range(4):
                    np.add.at(d_tables[p, level], idx[c], cache.weights[p, level, c][:, None] * g)
                t00, t10, t01, t11 = (table[idx[c]] for c in range(4))
                fx, fy = cache.frac[p, level, :, 0], cache.frac[p, level, :, 1]
                d_fx = np.sum(g * ((1 - fy)[:, None] * (t10 - t00) + fy[:, None] * (t11 - t01)), axis=1)
                d_fy = np.sum(g * ((1 - fx)[:, None] * (t01 - t00) + fx[:, None] * (t11 - t10)), axis=1)
                d_unit[:, a] += d_fx * resolution
                d_unit[:, b] += d_fy * resolution
        d_unit[~cache.inside] = 0.0
        return d_tables, d_unit / (self.bbox_max - self.bbox_min)


def encode_position(encoder: TriPlaneHashEncoder, mu) -> np.ndarray:
    """Feature vector f_s of one position."""
    features, _ = encoder.encode(np.asarray(mu, dtype=np.float64).reshape(1, 3))
    return features[0]
