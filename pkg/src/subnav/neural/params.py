"""Model parameters, their seeded initialization and checkpoint I/O.

All weights live in one name -> float64 array mapping so that training
updates, gradient accumulation and finite-difference checks can iterate
parameter groups generically.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1

#: number of heading/elevation components appended to every visual feature
DIRECTION_DIMS = 4


@dataclass(frozen=True)
class NeuralConfig:
    vocab_size: int
    embed_dim: int = 16
    hidden_dim: int = 32
    vis_noise_dim: int = 16      # synthetic per-viewpoint feature size
    mlp_hidden_dim: int = 16
    mlp_out_dim: int = 16
    shift_state_dim: int = 16
    count_embed_dim: int = 8
    count_capacity: int = 8      # one-hot size for "sub-instructions left"
    seed: int = 0

    @property
    def vis_dim(self) -> int:
        return self.vis_noise_dim + DIRECTION_DIMS


class Vocabulary:
    """Word -> id mapping with a reserved unknown-word id 0."""

    UNK = "<unk>"

    def __init__(self, words: list[str]):
        uniq = sorted(set(words) - {self.UNK})
        self._words = [self.UNK] + uniq
        self._ids = {w: i for i, w in enumerate(self._words)}

    @classmethod
    def from_episodes(cls, episodes) -> "Vocabulary":
        words = []
        for ep in episodes:
            for si in ep.sub_instructions:
                words.extend(w.lower() for w in si)
        return cls(words)

    def __len__(self) -> int:
        return len(self._words)

    @property
    def words(self) -> list[str]:
        return list(self._words)

    def encode(self, words: list[str]) -> list[int]:
        return [self._ids.get(w.lower(), 0) for w in words]


def _shapes(cfg: NeuralConfig) -> dict[str, tuple[int, ...]]:
    H, E, Dv = cfg.hidden_dim, cfg.embed_dim, cfg.vis_dim
    Dg, Dgh = cfg.mlp_out_dim, cfg.mlp_hidden_dim
    Dc, De = cfg.shift_state_dim, cfg.count_embed_dim
    return {
        "embed": (cfg.vocab_size, E),
        "enc_wx": (4 * H, E), "enc_wh": (4 * H, H), "enc_b": (4 * H,),
        "pol_wx": (4 * H, 2 * Dv), "pol_wh": (4 * H, H), "pol_b": (4 * H,),
        "text_attn_w": (H, H),
        "vis_attn_w": (Dg, H),
        "vis_mlp_w1": (Dgh, Dv), "vis_mlp_b1": (Dgh,),
        "vis_mlp_w2": (Dg, Dgh), "vis_mlp_b2": (Dg,),
        "action_w": (Dg, 2 * H),
        "stop_feature": (Dv,),
        "shift_state_w": (Dc, H), "shift_state_b": (Dc,),
        "shift_gate_w": (H, Dc + Dv + H), "shift_gate_b": (H,),
        "shift_count_w": (De, cfg.count_capacity), "shift_count_b": (De,),
        "shift_out_w": (1, De + H), "shift_out_b": (1,),
    }


@dataclass
class ModelParams:
    config: NeuralConfig
    arrays: dict[str, np.ndarray]
    vocab_words: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def zero_like(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(a) for name, a in self.arrays.items()}

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=self.config,
            arrays={k: v.copy() for k, v in self.arrays.items()},
            vocab_words=list(self.vocab_words),
        )

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(self.vocab_words or [])


def init_params(cfg: NeuralConfig, vocab: Vocabulary | None = None) -> ModelParams:
    """Seeded uniform init with fan-in scaling; forget-gate biases start at 1."""
    rng = np.random.default_rng(cfg.seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in _shapes(cfg).items():
        if name.endswith("_b") or name == "enc_b" or name == "pol_b":
            arrays[name] = np.zeros(shape, dtype=np.float64)
        elif name == "stop_feature":
            arrays[name] = rng.uniform(-1.0, 1.0, size=shape)
        else:
            fan_in = shape[-1]
            k = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-k, k, size=shape)
    H = cfg.hidden_dim
    for gate_bias in ("enc_b", "pol_b"):
        arrays[gate_bias][H:2 * H] = 1.0
    return ModelParams(
        config=cfg,
        arrays=arrays,
        vocab_words=vocab.words if vocab is not None else [],
    )


def zero_params(cfg: NeuralConfig, vocab: Vocabulary | None = None) -> ModelParams:
    arrays = {name: np.zeros(shape, dtype=np.float64)
              for name, shape in _shapes(cfg).items()}
    return ModelParams(config=cfg, arrays=arrays,
                       vocab_words=vocab.words if vocab is not None else [])


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    """Write an .npz with every named array plus a JSON metadata entry."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "vocab": params.vocab_words,
    }
    np.savez(path, __meta__=np.array(json.dumps(meta)), **params.arrays)


def load_checkpoint(path: str | Path) -> ModelParams:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {meta.get('version')!r}")
        cfg = NeuralConfig(**meta["config"])
        arrays = {name: data[name].astype(np.float64)
                  for name in data.files if name != "__meta__"}
    expected = _shapes(cfg)
    missing = sorted(set(expected) - set(arrays))
    if missing:
        raise ValueError(f"checkpoint missing arrays: {missing}")
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise ValueError(
                f"checkpoint array {name}: shape {arrays[name].shape}, "
                f"expected {shape}")
    return ModelParams(config=cfg, arrays=arrays, vocab_words=meta["vocab"])
