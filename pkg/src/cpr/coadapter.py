"""Sample-conditional prototype adapter.

For a query feature z and a prototype bank B (visual support prototypes or
textual prototypes), a branch computes

    residual = Norm(ffn_attn(attention(z W_q, B W_k, B W_v)) + ffn_skip(z))

and the fused per-sample classifier is prototypes + textual residual +
visual residual, broadcast across class rows and row-normalized. Both FFN
output layers start at zero, so an untrained adapter reproduces the
zero-shot classifier bit-for-bit at the logits it feeds downstream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, unit_rows
from .errors import ConfigError, FormatError, ShapeError

VARIANTS = ("dual", "image-only", "text-only")

_CKPT_MAGIC = b"CPR1"


def variant_flags(variant: str) -> tuple[bool, bool]:
    """(use_visual_branch, use_textual_branch) for a variant name."""
    if variant == "dual":
        return True, True
    if variant == "image-only":
        return True, False
    if variant == "text-only":
        return False, True
    raise ConfigError(f"unknown adapter variant {variant!r}, expected one of {VARIANTS}")


@dataclass
class Mlp:
    """Two-layer feed-forward block with a smooth nonlinearity."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @staticmethod
    def create(dim: int, hidden: int, prefix: str, rng: np.random.Generator) -> "Mlp":
        # output layer zeroed so the block contributes nothing at init
        return Mlp(
            w1=ad.param(rng.standard_normal((dim, hidden)) / np.sqrt(dim), f"{prefix}.w1"),
            b1=ad.param(np.zeros((1, hidden)), f"{prefix}.b1"),
            w2=ad.param(np.zeros((hidden, dim)), f"{prefix}.w2"),
            b2=ad.param(np.zeros((1, dim)), f"{prefix}.b2"),
        )

    def apply(self, x) -> Tensor:
        h = ad.gelu(ad.add_row(ad.matmul(x, self.w1), self.b1))
        return ad.add_row(ad.matmul(h, self.w2), self.b2)

    def tensors(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]


@dataclass
class AdapterBranch:
    """Trainable tensors of one branch (visual or textual)."""

    w_query: Tensor
    w_key: Tensor
    w_value: Tensor
    ffn_attn: Mlp  # processes the attention readout
    ffn_skip: Mlp  # processes the query feature itself
    ln_gain: Tensor
    ln_bias: Tensor
    ln_eps: float = 1e-5

    @staticmethod
    def create(dim: int, hidden: int, prefix: str, rng: np.random.Generator) -> "AdapterBranch":
        s = 1.0 / np.sqrt(dim)
        return AdapterBranch(
            w_query=ad.param(rng.standard_normal((dim, dim)) * s, f"{prefix}.w_query"),
            w_key=ad.param(rng.standard_normal((dim, dim)) * s, f"{prefix}.w_key"),
            w_value=ad.param(rng.standard_normal((dim, dim)) * s, f"{prefix}.w_value"),
            ffn_attn=Mlp.create(dim, hidden, f"{prefix}.ffn_attn", rng),
            ffn_skip=Mlp.create(dim, hidden, f"{prefix}.ffn_skip", rng),
            ln_gain=ad.param(np.ones((1, dim)), f"{prefix}.ln_gain"),
            ln_bias=ad.param(np.zeros((1, dim)), f"{prefix}.ln_bias"),
        )

    def tensors(self) -> list[Tensor]:
        return (
            [self.w_query, self.w_key, self.w_value]
            + self.ffn_attn.tensors()
            + self.ffn_skip.tensors()
            + [self.ln_gain, self.ln_bias]
        )


def residual(branch: AdapterBranch, z, bank) -> Tensor:
    """Per-sample residual vectors; ``z`` may carry one query row or a batch."""
    z = z if isinstance(z, Tensor) else ad.const(z)
    bank = bank if isinstance(bank, Tensor) else ad.const(bank)
    attended = ad.attention(
        ad.matmul(z, branch.w_query),
        ad.matmul(bank, branch.w_key),
        ad.matmul(bank, branch.w_value),
    )
    inner = ad.add(branch.ffn_attn.apply(attended), branch.ffn_skip.apply(z))
    return ad.layer_norm(inner, branch.ln_gain, branch.ln_bias, eps=branch.ln_eps)


@dataclass
class CoAdapterParams:
    """Both branches; single-modality variants simply skip one of them."""

    visual: AdapterBranch
    textual: AdapterBranch
    dim: int
    hidden: int
    seed: int

    @staticmethod
    def create(dim: int, hidden: int | None = None, seed: int = 0) -> "CoAdapterParams":
        hidden = hidden if hidden is not None else 2 * dim
        if hidden < 1:
            raise ConfigError(f"hidden width must be >= 1, got {hidden}")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0AD]))
        return CoAdapterParams(
            visual=AdapterBranch.create(dim, hidden, "visual", rng),
            textual=AdapterBranch.create(dim, hidden, "textual", rng),
            dim=dim,
            hidden=hidden,
            seed=seed,
        )

    def trainable(self, variant: str = "dual") -> list[Tensor]:
        use_v, use_t = variant_flags(variant)
        out: list[Tensor] = []
        if use_v:
            out += self.visual.tensors()
        if use_t:
            out += self.textual.tensors()
        return out

    def param_count(self, variant: str = "dual") -> int:
        return sum(t.data.size for t in self.trainable(variant))

    def tensors(self) -> list[Tensor]:
        return self.visual.tensors() + self.textual.tensors()


def combined_residual(
    adapter: CoAdapterParams, z, visual_bank, textual_bank, variant: str = "dual"
) -> Tensor:
    """Sum of the active branches' residuals for the given query rows."""
    use_v, use_t = variant_flags(variant)
    parts = []
    if use_v:
        parts.append(residual(adapter.visual, z, visual_bank))
    if use_t:
        parts.append(residual(adapter.textual, z, textual_bank))
    return parts[0] if len(parts) == 1 else ad.add(parts[0], parts[1])


@dataclass
class FusedPrototypes:
    """Per-sample classifier rows, optionally refined by the neighbor pass."""

    matrix: np.ndarray  # (C, d) unit rows
    rectified: np.ndarray | None = None

    @property
    def active(self) -> np.ndarray:
        return self.rectified if self.rectified is not None else self.matrix


def fuse(
    prototypes: np.ndarray, textual_residual=None, visual_residual=None
) -> FusedPrototypes:
    """prototypes + residuals broadcast over class rows, then row-normalized."""
    p = np.asarray(prototypes, dtype=np.float64)
    for r, tag in ((textual_residual, "textual"), (visual_residual, "visual")):
        if r is None:
            continue
        r = np.asarray(r, dtype=np.float64).reshape(-1)
        if r.shape[0] != p.shape[1]:
            raise ShapeError(f"{tag} residual has width {r.shape[0]}, prototypes {p.shape[1]}")
        p = p + r
    return FusedPrototypes(matrix=unit_rows(p))


# ---------------------------------------------------------------------------
# CPR1 checkpoint blob
# ---------------------------------------------------------------------------


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    """Versioned binary blob: magic then (name, rows, cols, f32 payload) records."""
    blob = bytearray(_CKPT_MAGIC)
    for name, value in tensors.items():
        arr = np.atleast_2d(np.asarray(value, dtype=np.float64)).astype("<f4")
        raw = name.encode("utf-8")
        blob += struct.pack("<I", len(raw)) + raw
        blob += struct.pack("<II", arr.shape[0], arr.shape[1])
        blob += arr.tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != _CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {buf[:4]!r}", offset=0)
    pos = 4
    out: dict[str, np.ndarray] = {}
    while pos < len(buf):
        label = f"tensor #{len(out)}"
        try:
            (name_len,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            if len(buf) - pos < name_len:
                raise ValueError("name overruns buffer")
            name = buf[pos : pos + name_len].decode("utf-8")
            label = f"tensor {name!r}"
            pos += name_len
            rows, cols = struct.unpack_from("<II", buf, pos)
            pos += 8
            payload = buf[pos : pos + 4 * rows * cols]
            if len(payload) != 4 * rows * cols:
                raise ValueError("payload overruns buffer")
            pos += len(payload)
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            raise FormatError(f"failed to parse checkpoint {label}: {exc}", offset=pos) from exc
        out[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(rows, cols)
    return out
