"""Feed-forward tanh policies with hand-derived reverse-mode derivatives.

The only differentiated program here is a fixed-shape MLP (tanh hidden
layers, identity output), so layer adjoints are written out in closed form
instead of pulling in an autodiff framework.  Parameters live in a single
flat vector laid out as (row-major weight matrix, bias) blocks per layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

PARAMS_MAGIC = b"CTPGPRM1"
PARAMS_VERSION = 1


@dataclass(frozen=True)
class MlpArch:
    """Layer sizes [d_in, h1, ..., d_out]; tanh hidden, identity output."""

    layer_sizes: tuple[int, ...]
    last_layer_scale: float = 1.0

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError("all layer sizes must be >= 1")
        if self.last_layer_scale <= 0:
            raise ValueError("last_layer_scale must be positive")
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    @property
    def dim_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def dim_out(self) -> int:
        return self.layer_sizes[-1]


def unpack_params(params: np.ndarray, arch: MlpArch) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into (W, b) views per layer, W shaped (out, in)."""
    if params.shape != (arch.n_params,):
        raise ValueError(f"expected {arch.n_params} params, got {params.shape}")
    layers = []
    off = 0
    sizes = arch.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = params[off:off + fan_in * fan_out].reshape(fan_out, fan_in)
        off += fan_in * fan_out
        b = params[off:off + fan_out]
        off += fan_out
        layers.append((w, b))
    return layers


def init_params(arch: MlpArch, seed: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.

    The final layer's weights are multiplied by arch.last_layer_scale.
    Deterministic given (arch, seed).
    """
    rng = np.random.default_rng(seed)
    sizes = arch.layer_sizes
    chunks = []
    n_layers = len(sizes) - 1
    for li, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        if li == n_layers - 1:
            w = w * arch.last_layer_scale
        chunks.append(w.ravel())
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def mlp_forward(params: np.ndarray, arch: MlpArch, x: np.ndarray) -> np.ndarray:
    """Forward pass; x may be a single input (d,) or a batch (n, d)."""
    if x.shape[-1] != arch.dim_in:
        raise ValueError(f"input dim {x.shape[-1]} != {arch.dim_in}")
    layers = unpack_params(params, arch)
    a = x
    for w, b in layers[:-1]:
        a = np.tanh(a @ w.T + b)
    w, b = layers[-1]
    return a @ w.T + b


def _forward_with_activations(params, arch, x):
    layers = unpack_params(params, arch)
    acts = [x]
    a = x
    for w, b in layers[:-1]:
        a = np.tanh(a @ w.T + b)
        acts.append(a)
    w, b = layers[-1]
    return acts, a @ w.T + b, layers


def mlp_jacobian_x(params: np.ndarray, arch: MlpArch, x: np.ndarray) -> np.ndarray:
    """Exact Jacobian d(output)/d(input), shape (dim_out, dim_in).

    Reverse accumulation over all output rows at once: start from the
    identity cotangent at the output and pull back layer by layer.
    """
    if x.shape != (arch.dim_in,):
        raise ValueError(f"expected input shape ({arch.dim_in},)")
    acts, _, layers = _forward_with_activations(params, arch, x)
    w_last, _ = layers[-1]
    g = w_last.copy()  # (k, fan_in of last layer)
    for (w, b), a in zip(layers[-2::-1], acts[-1:0:-1]):
        g = (g * (1.0 - a * a)) @ w
    return g


def mlp_vjp_params(params: np.ndarray, arch: MlpArch, x: np.ndarray,
                   v: np.ndarray) -> np.ndarray:
    """v^T d(output)/d(params) as a flat vector; no Jacobian materialized."""
    if v.shape != (arch.dim_out,):
        raise ValueError(f"cotangent dim {v.shape} != ({arch.dim_out},)")
    acts, _, layers = _forward_with_activations(params, arch, x)
    grads = [None] * len(layers)
    delta = v
    for li in range(len(layers) - 1, -1, -1):
        w, b = layers[li]
        a_prev = acts[li]
        grads[li] = (np.outer(delta, a_prev).ravel(), delta.copy())
        if li > 0:
            delta = (delta @ w) * (1.0 - acts[li] * acts[li])
    return np.concatenate([np.concatenate([gw, gb]) for gw, gb in grads])


def mlp_forward_many(params_matrix: np.ndarray, arch: MlpArch,
                     x: np.ndarray) -> np.ndarray:
    """Forward pass with a different parameter vector per batch row.

    params_matrix is (n, n_params) and x is (n, d); returns (n, k).  Used
    by brute-force finite-difference sweeps over parameter perturbations.
    """
    n = params_matrix.shape[0]
    sizes = arch.layer_sizes
    a = x
    off = 0
    n_layers = len(sizes) - 1
    for li, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = params_matrix[:, off:off + fan_in * fan_out].reshape(n, fan_out, fan_in)
        off += fan_in * fan_out
        b = params_matrix[:, off:off + fan_out]
        off += fan_out
        z = np.einsum("noi,ni->no", w, a) + b
        a = z if li == n_layers - 1 else np.tanh(z)
    return a


def save_params(path: str | Path, params: np.ndarray, arch: MlpArch,
                seed: int | None = None) -> None:
    """Flat little-endian binary dump with a 16-byte header + text sidecar.

    Header: 8-byte magic, uint32 version, uint32 n_params, then n_params
    float64 values.  The sidecar <path>.meta records arch and seed.
    """
    path = Path(path)
    n = len(params)
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<II", PARAMS_VERSION, n))
        fh.write(np.asarray(params, dtype="<f8").tobytes())
    lines = [
        f"layer_sizes = {','.join(str(s) for s in arch.layer_sizes)}",
        f"last_layer_scale = {arch.last_layer_scale!r}",
        f"seed = {'none' if seed is None else seed}",
    ]
    Path(str(path) + ".meta").write_text("\n".join(lines) + "\n")


def load_params(path: str | Path) -> tuple[np.ndarray, MlpArch, int | None]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != PARAMS_MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, n = struct.unpack("<II", raw[8:16])
    if version != PARAMS_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    params = np.frombuffer(raw[16:], dtype="<f8").astype(float)
    if len(params) != n:
        raise ValueError(f"{path}: expected {n} values, found {len(params)}")
    meta = {}
    for line in Path(str(path) + ".meta").read_text().splitlines():
        if "=" in line:
            key, val = line.split("=", 1)
            meta[key.strip()] = val.strip()
    arch = MlpArch(tuple(int(s) for s in meta["layer_sizes"].split(",")),
                   float(meta["last_layer_scale"]))
    seed = None if meta.get("seed", "none") == "none" else int(meta["seed"])
    return params, arch, seed


def _identity_features(x):
    return x


def _identity_feature_jac(x):
    return np.eye(len(x))


@dataclass
class MlpPolicy:
    """MLP policy u = net(features(x)).

    The feature map is a fixed pre-network transform owned by the
    environment (e.g. appending cos/sin of a heading); its Jacobian is
    chained into jac_x.
    """

    arch: MlpArch
    params: np.ndarray
    feature_map: Callable[[np.ndarray], np.ndarray] = _identity_features
    feature_jac: Callable[[np.ndarray], np.ndarray] = _identity_feature_jac

    @property
    def n_params(self) -> int:
        return self.arch.n_params

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return mlp_forward(self.params, self.arch, self.feature_map(x))

    def jac_x(self, x: np.ndarray) -> np.ndarray:
        phi = self.feature_map(x)
        return mlp_jacobian_x(self.params, self.arch, phi) @ self.feature_jac(x)

    def vjp_params(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return mlp_vjp_params(self.params, self.arch, self.feature_map(x), v)

    def with_params(self, params: np.ndarray) -> "MlpPolicy":
        return replace(self, params=np.asarray(params, dtype=float))

    def batch_forward(self, params_matrix: np.ndarray, x: np.ndarray) -> np.ndarray:
        return mlp_forward_many(params_matrix, self.arch, self.feature_map(x))


class ScalarGainPolicy:
    """u = -k x with a single trainable gain k (dim_u == dim_x)."""

    def __init__(self, k: float | np.ndarray):
        self.params = np.atleast_1d(np.asarray(k, dtype=float)).ravel()
        if self.params.shape != (1,):
            raise ValueError("scalar gain takes exactly one parameter")

    @property
    def n_params(self) -> int:
        return 1

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return -self.params[0] * x

    def jac_x(self, x: np.ndarray) -> np.ndarray:
        return -self.params[0] * np.eye(len(x))

    def vjp_params(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.array([-float(v @ x)])

    def with_params(self, params: np.ndarray) -> "ScalarGainPolicy":
        return ScalarGainPolicy(params)

    def batch_forward(self, params_matrix: np.ndarray, x: np.ndarray) -> np.ndarray:
        return -params_matrix[:, :1] * x


def mlp_policy_for(env, hidden: tuple[int, ...], seed: int,
                   last_layer_scale: float = 1.0) -> MlpPolicy:
    """Build an MLP policy matched to an environment's feature map."""
    arch = MlpArch((env.feature_dim, *hidden, env.dim_u), last_layer_scale)
    return MlpPolicy(arch, init_params(arch, seed),
                     env.feature_map, env.feature_jac)
