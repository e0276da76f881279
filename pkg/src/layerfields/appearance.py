"""Time-conditioned UV texture field with a view-dependent residual branch.

The trunk consumes encoded (u, v), the layer level value (raw and encoded),
and a learned per-frame latent code.  Two linear heads follow: a
view-independent RGBA head, and a single-channel view-dependent head that
additionally sees the encoded view direction.  The scalar view-dependent
output is added equally to all three RGB channels; it is left unbounded
because training penalizes it toward zero.  RGB is clamped to [0, 1], alpha
is squashed by a sigmoid.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .nn import MLP, Encoding, ParamStore, positional_encode

CODE_DIM = 32


class TextureField:
    def __init__(self, n_frames: int, trunk_width: int = 256,
                 trunk_depth: int = 8, activation: str = "relu",
                 uv_enc_l: int = 10, s_enc_l: int = 4, view_enc_l: int = 4,
                 seed: int = 0, store: ParamStore | None = None):
        if n_frames < 1:
            raise ConfigError("texture field needs at least one frame")
        self.n_frames = n_frames
        self.trunk_width = trunk_width
        self.trunk_depth = trunk_depth
        self.activation = activation
        self.uv_enc = Encoding(uv_enc_l, include_identity=True)
        self.s_enc = Encoding(s_enc_l, include_identity=True)
        self.view_enc = Encoding(view_enc_l, include_identity=True)
        self.seed = seed
        self.store = store if store is not None else ParamStore()
        rng = np.random.default_rng(seed)
        in_dim = self.uv_enc.out_dim(2) + self.s_enc.out_dim(1) + CODE_DIM
        trunk_dims = [in_dim] + [trunk_width] * trunk_depth
        self.trunk = MLP(self.store, "texture.trunk", trunk_dims, activation, rng)
        self.vi_head = MLP(self.store, "texture.vi", [trunk_width, 4],
                           activation, rng)
        vd_in = trunk_width + self.view_enc.out_dim(3)
        self.vd_head = MLP(self.store, "texture.vd", [vd_in, 1],
                           activation, rng)
        # zero-initialized heads: surfaces start black and transparent-ish
        # (rgb 0, alpha 0.5, no view residual), so geometry is never pushed
        # away just to hide uninitialized colors; the clamp's unit
        # subgradient keeps rgb gradients alive at exactly 0
        for name in ("texture.vi.w0", "texture.vi.b0",
                     "texture.vd.w0", "texture.vd.b0"):
            self.store.set(name, np.zeros_like(self.store[name].data))
        self.store.add("embed.table",
                       rng.normal(0.0, 0.01, size=(n_frames, CODE_DIM)))

    def arch_spec(self) -> dict:
        return {"n_frames": self.n_frames, "trunk_width": self.trunk_width,
                "trunk_depth": self.trunk_depth, "activation": self.activation,
                "uv_enc_l": self.uv_enc.L, "s_enc_l": self.s_enc.L,
                "view_enc_l": self.view_enc.L, "seed": self.seed}

    @classmethod
    def from_arch(cls, spec: dict) -> "TextureField":
        return cls(spec["n_frames"], trunk_width=spec["trunk_width"],
                   trunk_depth=spec["trunk_depth"], activation=spec["activation"],
                   uv_enc_l=spec["uv_enc_l"], s_enc_l=spec["s_enc_l"],
                   view_enc_l=spec["view_enc_l"], seed=spec["seed"])

    # -- frame codes ----------------------------------------------------------

    def code_t(self, frame_index: np.ndarray) -> Tensor:
        """Rows of the embedding table for 1-based frame indices, (n, 32)."""
        j = np.asarray(frame_index, dtype=np.int64)
        if np.any(j < 1) or np.any(j > self.n_frames):
            raise ConfigError(f"frame index out of range 1..{self.n_frames}")
        return ad.gather(self.store["embed.table"], (j - 1,))

    def eval_t(self, uv, s_value, code, view_dir=None):
        """Batch evaluation; returns (rgb (n,3), alpha (n,), vd (n,)).

        ``code`` is (n, 32); pass ``view_dir=None`` to bypass the
        view-dependent branch entirely.
        """
        uv_t = uv if isinstance(uv, Tensor) else Tensor(uv)
        n = uv_t.shape[0]
        s_t = s_value if isinstance(s_value, Tensor) else Tensor(s_value)
        s_t = ad.reshape(s_t, (n, 1))
        code_t = code if isinstance(code, Tensor) else Tensor(code)
        feats = ad.concat([positional_encode(uv_t, self.uv_enc),
                           positional_encode(s_t, self.s_enc),
                           code_t], axis=-1)
        act = {"relu": ad.relu, "softplus": ad.softplus,
               "tanh": ad.tanh, "sine": ad.sin}[self.activation]
        trunk_out = act(self.trunk(feats))
        head = self.vi_head(trunk_out)
        rgb = ad.clip01(ad.gather(head, (slice(None), slice(0, 3))))
        alpha = ad.sigmoid(ad.reshape(
            ad.gather(head, (slice(None), slice(3, 4))), (n,)))
        if view_dir is None:
            return rgb, alpha, Tensor(np.zeros(n))
        vdir = np.asarray(ad.value(view_dir), dtype=np.float64).reshape(-1, 3)
        norms = np.linalg.norm(vdir, axis=-1, keepdims=True)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            warnings.warn("view directions were not unit length; normalizing")
            vdir = vdir / norms
        venc = positional_encode(Tensor(np.broadcast_to(vdir, (n, 3)).copy()),
                                 self.view_enc)
        vd = ad.reshape(self.vd_head(ad.concat([trunk_out, venc], axis=-1)), (n,))
        rgb = ad.add(rgb, ad.reshape(vd, (n, 1)))
        return rgb, alpha, vd


def embed_frame(field: TextureField, j: int) -> np.ndarray:
    """Learned 32-dim latent code of 1-based frame j."""
    with ad.no_grad():
        return field.code_t(np.array([j])).data[0].copy()


def interpolate_codes(code_a: np.ndarray, code_b: np.ndarray, w: float) -> np.ndarray:
    if not 0.0 <= w <= 1.0:
        raise ConfigError("interpolation weight must be in [0, 1]")
    a = np.asarray(code_a, dtype=np.float64)
    b = np.asarray(code_b, dtype=np.float64)
    return (1.0 - w) * a + w * b


def texture_eval(field: TextureField, uv, s_value: float, code: np.ndarray,
                 view_dir=None) -> tuple[float, float, float, float]:
    """Single-query RGBA lookup (view branch bypassed when view_dir is None)."""
    uv = np.asarray(uv, dtype=np.float64).reshape(1, 2)
    if np.any(np.abs(uv) > 1.0):
        raise ConfigError("uv outside [-1, 1]^2")
    with ad.no_grad():
        rgb, alpha, _ = field.eval_t(
            uv, np.array([s_value]), np.asarray(code).reshape(1, CODE_DIM),
            view_dir=None if view_dir is None else np.asarray(view_dir).reshape(1, 3))
    r, g, b = rgb.data[0]
    return float(r), float(g), float(b), float(alpha.data[0])
