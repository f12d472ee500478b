"""Gated recurrent unit: single step, sequence scan, bidirectional wrapper.

Gate convention: with update gate z, reset gate r, and candidate state c,

    z = sigmoid(x W_in_z + h_prev W_rec_z + b_z)
    r = sigmoid(x W_in_r + h_prev W_rec_r + b_r)
    c = tanh(x W_in_c + (h_prev * r) W_rec_c + b_c)
    h = (1 - z) * h_prev + z * c

The reset gate multiplies the previous state before the recurrent matrix.
With every parameter zero, z = 0.5 and c = 0, so one step exactly halves the
state: a cheap closed-form identity the tests pin down.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from .layers import glorot_uniform, orthogonal


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Gru:
    """Unidirectional scan over (B, T, in) or (T, in); zero initial state."""

    def __init__(self, in_dim: int, units: int, rng: np.random.Generator | None = None):
        if in_dim < 1 or units < 1:
            raise DomainError("in_dim and units must be positive")
        rng = rng or np.random.default_rng(0)
        self.in_dim = in_dim
        self.units = units
        self.params = {}
        for gate in ("z", "r", "c"):
            self.params[f"W_in_{gate}"] = glorot_uniform(rng, in_dim, units, (in_dim, units))
            self.params[f"W_rec_{gate}"] = orthogonal(rng, units)
            self.params[f"b_{gate}"] = np.zeros(units)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None

    def zero_grads(self):
        for g in self.grads.values():
            g[...] = 0.0

    def step(self, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
        """One recurrence step; x (..., in_dim), h_prev (..., units)."""
        p = self.params
        z = _sigmoid(x @ p["W_in_z"] + h_prev @ p["W_rec_z"] + p["b_z"])
        r = _sigmoid(x @ p["W_in_r"] + h_prev @ p["W_rec_r"] + p["b_r"])
        c = np.tanh(x @ p["W_in_c"] + (h_prev * r) @ p["W_rec_c"] + p["b_c"])
        return (1.0 - z) * h_prev + z * c

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        squeezed = x.ndim == 2
        if squeezed:
            x = x[None]
        if x.shape[-1] != self.in_dim:
            raise DomainError(f"gru expects {self.in_dim} input features, got {x.shape[-1]}")
        b, t, _ = x.shape
        p = self.params
        # input projections for the whole sequence in one matmul per gate
        pre_z = x @ p["W_in_z"] + p["b_z"]
        pre_r = x @ p["W_in_r"] + p["b_r"]
        pre_c = x @ p["W_in_c"] + p["b_c"]
        h = np.zeros((b, self.units))
        hs = np.empty((b, t, self.units))
        zs = np.empty_like(hs)
        rs = np.empty_like(hs)
        cs = np.empty_like(hs)
        prevs = np.empty_like(hs)
        for i in range(t):
            z = _sigmoid(pre_z[:, i] + h @ p["W_rec_z"])
            r = _sigmoid(pre_r[:, i] + h @ p["W_rec_r"])
            c = np.tanh(pre_c[:, i] + (h * r) @ p["W_rec_c"])
            prevs[:, i] = h
            h = (1.0 - z) * h + z * c
            hs[:, i], zs[:, i], rs[:, i], cs[:, i] = h, z, r, c
        self._cache = (x, prevs, zs, rs, cs, squeezed)
        return hs[0] if squeezed else hs

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x, prevs, zs, rs, cs, squeezed = self._cache
        if squeezed:
            dy = dy[None]
        b, t, _ = x.shape
        p, g = self.params, self.grads
        daz = np.empty((b, t, self.units))
        dar = np.empty_like(daz)
        dac = np.empty_like(daz)
        dh_next = np.zeros((b, self.units))
        for i in range(t - 1, -1, -1):
            dh = dy[:, i] + dh_next
            z, r, c, h_prev = zs[:, i], rs[:, i], cs[:, i], prevs[:, i]
            dz = dh * (c - h_prev)
            dc = dh * z
            da_c = dc * (1.0 - c * c)
            da_z = dz * z * (1.0 - z)
            dh_prev = dh * (1.0 - z)
            dhr = da_c @ p["W_rec_c"].T
            dh_prev += dhr * r
            dr = dhr * h_prev
            da_r = dr * r * (1.0 - r)
            dh_prev += da_z @ p["W_rec_z"].T + da_r @ p["W_rec_r"].T
            g["W_rec_z"] += h_prev.T @ da_z
            g["W_rec_r"] += h_prev.T @ da_r
            g["W_rec_c"] += (h_prev * r).T @ da_c
            daz[:, i], dar[:, i], dac[:, i] = da_z, da_r, da_c
            dh_next = dh_prev
        flat = lambda a: a.reshape(-1, a.shape[-1])
        xf = flat(x)
        g["W_in_z"] += xf.T @ flat(daz)
        g["W_in_r"] += xf.T @ flat(dar)
        g["W_in_c"] += xf.T @ flat(dac)
        g["b_z"] += daz.sum(axis=(0, 1))
        g["b_r"] += dar.sum(axis=(0, 1))
        g["b_c"] += dac.sum(axis=(0, 1))
        dx = daz @ p["W_in_z"].T + dar @ p["W_in_r"].T + dac @ p["W_in_c"].T
        return dx[0] if squeezed else dx


class BiGru:
    """Forward and reversed scans concatenated along the feature axis;
    output width is 2 * units."""

    def __init__(self, in_dim: int, units: int, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.fwd = Gru(in_dim, units, rng)
        self.bwd = Gru(in_dim, units, rng)
        self.units = units

    @property
    def params(self) -> dict[str, np.ndarray]:
        out = {f"fwd/{k}": v for k, v in self.fwd.params.items()}
        out.update({f"bwd/{k}": v for k, v in self.bwd.params.items()})
        return out

    @property
    def grads(self) -> dict[str, np.ndarray]:
        out = {f"fwd/{k}": v for k, v in self.fwd.grads.items()}
        out.update({f"bwd/{k}": v for k, v in self.bwd.grads.items()})
        return out

    def zero_grads(self):
        self.fwd.zero_grads()
        self.bwd.zero_grads()

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        hf = self.fwd.forward(x)
        hb = self.bwd.forward(np.ascontiguousarray(np.flip(x, axis=-2)))
        hb = np.flip(hb, axis=-2)
        return np.concatenate([hf, hb], axis=-1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dyf = dy[..., : self.units]
        dyb = dy[..., self.units :]
        dxf = self.fwd.backward(dyf)
        dxb = self.bwd.backward(np.ascontiguousarray(np.flip(dyb, axis=-2)))
        return dxf + np.flip(dxb, axis=-2)
