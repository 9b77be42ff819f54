"""Fully connected Gaussian-head networks and the TAE / MVAE parameter bundles.

Parameters live in one flat ``dict[str, ndarray]`` per model, keyed
``"<net>.<param>"``; the network objects only hold architecture. Forward
passes take the parameter dict explicitly so the same code runs on raw
arrays or on autodiff Vars.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .compute import autodiff as ad
from .compute.rng import seeded_rng
from .data_io import save_npz
from .distributions import DiagGaussian, rsample

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Arch:
    d: int
    z_dim: int = 20
    zp_dim: int = 5
    hidden: int = 400
    prior_hidden: int = 50
    n_layers: int = 2
    slope: float = 0.01
    logvar_min: float = -10.0
    logvar_max: float = 10.0
    # q(x|z,y,alpha) and r(z|x,y,alpha) instead of the independence assumption
    conditional: bool = False
    noise_head: bool = False

    def __post_init__(self):
        for name in ("d", "z_dim", "zp_dim", "hidden", "prior_hidden", "n_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"arch.{name} must be >= 1")
        if not self.logvar_min < self.logvar_max:
            raise ValueError("arch.logvar_min must be below arch.logvar_max")


@dataclass(frozen=True)
class Mlp:
    """Leaky-ReLU trunk followed by affine mean and log-variance heads."""

    prefix: str
    n_in: int
    hidden: tuple
    n_out: int
    slope: float = 0.01
    logvar_min: float = -10.0
    logvar_max: float = 10.0

    def param_shapes(self) -> dict:
        shapes = {}
        fan_in = self.n_in
        for i, h in enumerate(self.hidden):
            shapes[f"{self.prefix}.W{i}"] = (fan_in, h)
            shapes[f"{self.prefix}.b{i}"] = (h,)
            fan_in = h
        shapes[f"{self.prefix}.Wm"] = (fan_in, self.n_out)
        shapes[f"{self.prefix}.bm"] = (self.n_out,)
        shapes[f"{self.prefix}.Wv"] = (fan_in, self.n_out)
        shapes[f"{self.prefix}.bv"] = (self.n_out,)
        return shapes

    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes().values()))

    def init(self, rng: np.random.Generator) -> dict:
        """Glorot-uniform weights, zero biases."""
        params = {}
        for name, shape in self.param_shapes().items():
            if len(shape) == 2:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                params[name] = rng.uniform(-limit, limit, size=shape)
            else:
                params[name] = np.zeros(shape)
        return params

    def trunk(self, params, x):
        h = x
        for i in range(len(self.hidden)):
            h = ad.add(ad.matmul(h, params[f"{self.prefix}.W{i}"]), params[f"{self.prefix}.b{i}"])
            h = ad.leaky_relu(h, self.slope)
        return h

    def head(self, params, h) -> DiagGaussian:
        p = self.prefix
        mean = ad.add(ad.matmul(h, params[f"{p}.Wm"]), params[f"{p}.bm"])
        logvar = ad.add(ad.matmul(h, params[f"{p}.Wv"]), params[f"{p}.bv"])
        return DiagGaussian(mean, ad.clip(logvar, self.logvar_min, self.logvar_max))

    def __call__(self, params, x) -> DiagGaussian:
        n_in = np.shape(ad.value(x))[-1]
        if n_in != self.n_in:
            raise ValueError(f"{self.prefix}: expected input dim {self.n_in}, got {n_in}")
        return self.head(params, self.trunk(params, x))


def mlp_head(net: Mlp, params: dict, x) -> DiagGaussian:
    return net(params, x)


def _mlp(arch: Arch, prefix, n_in, width, n_out, **kw) -> Mlp:
    kw.setdefault("logvar_min", arch.logvar_min)
    kw.setdefault("logvar_max", arch.logvar_max)
    return Mlp(prefix, n_in, (width,) * arch.n_layers, n_out, arch.slope, **kw)


class _LatentPosterior:
    """Shared posterior LVM q(x|y, alpha) = integral of q(z|y, alpha) q(x|z) dz."""

    kind: str
    arch: Arch
    params: dict
    enc: Mlp
    dec: Mlp

    def encode(self, params, y, alpha) -> DiagGaussian:
        return self.enc(params, ad.concat([y, alpha], axis=-1))

    def decoder_input(self, z, y, alpha):
        if self.arch.conditional:
            return ad.concat([z, y, alpha], axis=-1)
        return z

    def decode(self, params, z, y=None, alpha=None):
        """Returns the conditional over x and the decoder trunk activation."""
        h = self.dec.trunk(params, self.decoder_input(z, y, alpha))
        return self.dec.head(params, h), h

    def nets(self) -> list:
        return [self.enc, self.dec]

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def draw(self, y, alpha, n, rng):
        """``n`` posterior draws of clean data for one observation."""
        return posterior_sample(self, y, alpha, n, rng)[0]

    def draw_rows(self, y, alpha, rng):
        """One posterior draw per row of ``y``."""
        return sample_rows(self, y, alpha, rng)


class TaeModel(_LatentPosterior):
    kind = "tae"

    def __init__(self, arch: Arch, params: Optional[dict] = None):
        self.arch = arch
        d, h, hp = arch.d, arch.hidden, arch.prior_hidden
        extra = 2 * d if arch.conditional else 0
        self.enc = _mlp(arch, "enc", 2 * d, h, arch.z_dim)
        self.dec = _mlp(arch, "dec", arch.z_dim + extra, h, d)
        self.prior_enc = _mlp(arch, "prior_enc", d, hp, arch.zp_dim)
        self.prior_dec = _mlp(arch, "prior_dec", arch.zp_dim, hp, d)
        self.lat_post = _mlp(arch, "lat_post", d + extra, h, arch.z_dim)
        # scalar q(log sigma | z, y, alpha) read off the decoder trunk
        self.noise = (Mlp("noise", h, (), 1, arch.slope, arch.logvar_min, arch.logvar_max)
                      if arch.noise_head else None)
        self.params = params if params is not None else {}

    def nets(self) -> list:
        nets = [self.enc, self.dec, self.prior_enc, self.prior_dec, self.lat_post]
        return nets + ([self.noise] if self.noise is not None else [])

    def latent_posterior(self, params, x, y, alpha) -> DiagGaussian:
        inp = ad.concat([x, y, alpha], axis=-1) if self.arch.conditional else x
        return self.lat_post(params, inp)


class MvaeModel(_LatentPosterior):
    """Encoder/decoder pair trained with the MVAE or MIWAE bound."""

    def __init__(self, arch: Arch, params: Optional[dict] = None, kind: str = "mvae"):
        if kind not in ("mvae", "miwae"):
            raise ValueError(f"unknown kind {kind!r}")
        if arch.conditional:
            raise ValueError("the MVAE decoder cannot condition on y")
        self.kind = kind
        self.arch = arch
        self.enc = _mlp(arch, "enc", 2 * arch.d, arch.hidden, arch.z_dim)
        self.dec = _mlp(arch, "dec", arch.z_dim, arch.hidden, arch.d)
        self.params = params if params is not None else {}


def init_model(arch: Arch, seed: int, kind: str = "tae"):
    """Fresh model with Glorot-uniform weights drawn from ``seed``."""
    model = TaeModel(arch) if kind == "tae" else MvaeModel(arch, kind=kind)
    rng = seeded_rng(seed)
    for net in model.nets():
        model.params.update(net.init(rng))
    return model


def posterior_sample(model, y, alpha, n: int, rng):
    """Draw z ~ q(z|y, alpha) then x ~ q(x|z); returns (draws, conditional means),
    each of shape (n, d)."""
    d = model.arch.d
    if n == 0:
        return np.zeros((0, d)), np.zeros((0, d))
    y = np.broadcast_to(np.asarray(y, dtype=np.float64), (n, d))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (n, d))
    qz = model.encode(model.params, y, alpha)
    z = rsample(qz, rng)
    qx, _ = model.decode(model.params, z, y, alpha)
    x = rsample(qx, rng)
    return np.asarray(x), np.asarray(qx.mean)


def sample_rows(model, y, alpha, rng):
    """One draw x ~ q(x|y_i, alpha_i) for every row i."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    qz = model.encode(model.params, y, alpha)
    z = rsample(qz, rng)
    qx, _ = model.decode(model.params, z, y, alpha)
    return np.asarray(rsample(qx, rng))


def posterior_mean(model, y, alpha, n: int, rng):
    """Monte Carlo average of the conditional means over ``n`` latent draws."""
    return posterior_sample(model, y, alpha, n, rng)[1].mean(axis=0)


# checkpoints

def save_checkpoint(model, path) -> None:
    """npz container (fixed zip timestamps, so identical models give identical bytes)."""
    meta = {"version": CHECKPOINT_VERSION, "kind": model.kind, "arch": asdict(model.arch),
            "names": sorted(model.params)}
    arrays = {"__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    arrays.update(model.params)
    save_npz(path, arrays)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(data["__meta__"].tobytes().decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        params = {name: np.array(data[name]) for name in meta["names"]}
    arch = Arch(**meta["arch"])
    kind = meta["kind"]
    model = TaeModel(arch, params) if kind == "tae" else MvaeModel(arch, params, kind=kind)
    expected = {n: s for net in model.nets() for n, s in net.param_shapes().items()}
    for name, shape in expected.items():
        if name not in params or params[name].shape != shape:
            raise ValueError(f"checkpoint does not match its architecture at {name!r}")
    return model


def copy_model(model):
    params = {k: v.copy() for k, v in model.params.items()}
    if model.kind == "tae":
        return TaeModel(model.arch, params)
    return MvaeModel(model.arch, params, kind=model.kind)
