"""The multimodal surrogate: caption/one-hot encoding, broadcast-concat
fusion, a sequence encoder, and a shared per-timestep prediction head.

The model regresses an output series from an exogenous feature sequence
plus one of four attribute paths:

* ``syscaps_kv`` / ``syscaps_nl`` - caption text through the trainable
  text encoder;
* ``onehot``   - encoded attribute vector through a linear embedding;
* ``none``     - no attribute information (ablation runs only).

Targets are z-scored inside the model (statistics learned from training
targets); :meth:`Surrogate.predict_rows` returns de-standardized units.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import BiLSTM, Linear, MLPHead, ResNetMLP
from .schema import AttributeSchema, OneHotAttributeEncoder
from .simulators import WeatherScenario
from .textenc import TextEncoder
from .tokenizer import Vocabulary
from .validation import ContractViolation, require

ATTRIBUTE_PATHS = ("syscaps_kv", "syscaps_nl", "onehot", "none")
SEQUENCE_ENCODERS = ("bilstm", "resnet_mlp")

# fixed, data-independent normalization of the weather channels
WEATHER_NORMS = (
    ("dry_bulb_c", 12.0, 15.0),
    ("rel_humidity_pct", 55.0, 25.0),
    ("wind_speed_ms", 4.0, 2.5),
    ("solar_direct_wm2", 200.0, 280.0),
    ("solar_diffuse_wm2", 80.0, 90.0),
    ("dew_point_c", 5.0, 13.0),
    ("pressure_kpa", 101.3, 2.0),
)


def scenario_features(weather: WeatherScenario) -> np.ndarray:
    """Normalized weather channels plus cyclic calendar features, (T, 11)."""
    norm = np.empty_like(weather.values)
    for i, (_, mean, scale) in enumerate(WEATHER_NORMS):
        norm[:, i] = (weather.values[:, i] - mean) / scale
    return np.concatenate([norm, weather.calendar_features()], axis=1)


def atmosphere_features(atmo: Mapping) -> np.ndarray:
    """Steady-state atmospheric condition as a one-step sequence, (1, 4)."""
    direction = np.radians(atmo["wind_direction"])
    return np.array([[atmo["wind_speed"] / 10.0,
                      np.sin(direction), np.cos(direction),
                      atmo["turbulence_intensity"] / 0.25]])


N_FEATURES = {"building": len(WEATHER_NORMS) + 4, "windfarm": 4}


@dataclass
class SurrogateConfig:
    attribute_path: str = "syscaps_kv"
    sequence_encoder: str = "bilstm"
    hidden_size: int = 32
    num_layers: int = 1
    embed_dim: int = 128
    top_hidden: int = 64
    T: int = 168
    token_dim: int = 24
    text_hidden: int = 48
    max_tokens: int = 192
    resnet_blocks: int = 2

    def __post_init__(self):
        require(self.attribute_path in ATTRIBUTE_PATHS,
                f"attribute_path must be one of {ATTRIBUTE_PATHS}")
        require(self.sequence_encoder in SEQUENCE_ENCODERS,
                f"sequence_encoder must be one of {SEQUENCE_ENCODERS}")
        if self.T == 1:
            require(self.sequence_encoder == "resnet_mlp",
                    "T=1 requires the resnet_mlp sequence encoder")

    @property
    def uses_text(self) -> bool:
        return self.attribute_path in ("syscaps_kv", "syscaps_nl")

    @property
    def caption_kind(self) -> str:
        require(self.uses_text, "caption kind undefined for non-text paths")
        return "kv" if self.attribute_path == "syscaps_kv" else "nl"


@dataclass
class Row:
    """One model input/target pair in encoded form."""

    features: np.ndarray  # (T, F)
    tokens: Optional[list[int]] = None
    onehot: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None  # (T,)
    system_id: str = ""


def fuse_broadcast(z: Tensor, x: Tensor) -> Tensor:
    """Broadcast one caption embedding over T steps and concatenate.

    ``z`` is (1, d); ``x`` is (T, F); the result is (T, d + F) with each
    timestep carrying (z; x_t). Differentiable through both inputs.
    """
    require(z.data.ndim == 2 and z.shape[0] == 1, "z must be a (1, d) embedding")
    require(x.data.ndim == 2, "x must be a (T, F) sequence")
    tiled = ad.tile_rows(z, x.shape[0]) if x.shape[0] > 1 else z
    return ad.concat([tiled, x], axis=1)


class Surrogate:
    """Full model; parameters live in a flat name->Tensor registry."""

    def __init__(self, config: SurrogateConfig, n_features: int,
                 vocab: Optional[Vocabulary] = None,
                 onehot_encoder: Optional[OneHotAttributeEncoder] = None,
                 seed: int = 0, family: str = "building"):
        self.config = config
        self.n_features = n_features
        self.vocab = vocab
        self.onehot_encoder = onehot_encoder
        self.family = family
        self.y_mean = 0.0
        self.y_std = 1.0
        self.training_ranges: dict[str, tuple[float, float]] = {}
        self.dataset_id: Optional[str] = None

        rng = np.random.default_rng(seed)
        self.text_encoder: Optional[TextEncoder] = None
        self.onehot_proj: Optional[Linear] = None
        z_dim = 0
        if config.uses_text:
            require(vocab is not None, "text attribute paths need a vocabulary")
            self.text_encoder = TextEncoder(rng, len(vocab), config.token_dim,
                                            config.text_hidden, config.embed_dim)
            z_dim = config.embed_dim
        elif config.attribute_path == "onehot":
            require(onehot_encoder is not None, "onehot path needs a fitted encoder")
            self.onehot_proj = Linear(rng, onehot_encoder.width_, config.embed_dim,
                                      "attr_proj")
            z_dim = config.embed_dim

        in_dim = z_dim + n_features
        self.seq_layers: list = []
        if config.sequence_encoder == "bilstm":
            dim = in_dim
            for i in range(config.num_layers):
                self.seq_layers.append(BiLSTM(rng, dim, config.hidden_size, f"seq{i}"))
                dim = 2 * config.hidden_size
            e_dim = dim
        else:
            self.seq_layers.append(ResNetMLP(rng, in_dim, config.hidden_size,
                                             config.resnet_blocks, "seq0"))
            e_dim = config.hidden_size
        self.head = MLPHead(rng, e_dim, config.top_hidden, 1, "top")

    # -- parameter registry -------------------------------------------------

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.text_encoder is not None:
            out.update(self.text_encoder.params())
        if self.onehot_proj is not None:
            out.update(self.onehot_proj.params())
        for layer in self.seq_layers:
            out.update(layer.params())
        out.update(self.head.params())
        return out

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params().values())

    def parameter_checksum(self) -> str:
        digest = hashlib.sha256()
        for name in sorted(self.params()):
            digest.update(name.encode())
            digest.update(self.params()[name].data.tobytes())
        return digest.hexdigest()

    # -- forward ------------------------------------------------------------

    def _embed_attributes(self, rows: Sequence[Row]) -> Optional[Tensor]:
        path = self.config.attribute_path
        if path == "none":
            return None
        if self.config.uses_text:
            sequences = []
            for r in rows:
                require(r.tokens is not None and len(r.tokens) >= 2,
                        "caption path received an empty caption")
                sequences.append(r.tokens)
            return self.text_encoder.encode_batch(sequences)
        mat = np.stack([r.onehot for r in rows])
        return self.onehot_proj(ad.tensor(mat))

    def forward_rows(self, rows: Sequence[Row]) -> Tensor:
        """Standardized predictions, shape (T*B, 1) in timestep-major order."""
        require(len(rows) > 0, "empty batch")
        T = rows[0].features.shape[0]
        for r in rows:
            require(r.features.shape == (T, self.n_features),
                    f"feature block must be ({T}, {self.n_features}), "
                    f"got {r.features.shape}")
        if self.config.sequence_encoder == "bilstm" and T < 2:
            raise ContractViolation(
                "bilstm needs T >= 2; configure sequence_encoder='resnet_mlp'")

        batch = len(rows)
        X = np.stack([r.features for r in rows])  # (B, T, F)
        z = self._embed_attributes(rows)

        if self.config.sequence_encoder == "bilstm":
            steps = []
            for t in range(T):
                x_t = ad.tensor(X[:, t, :])
                steps.append(x_t if z is None else ad.concat([z, x_t], axis=1))
            for layer in self.seq_layers:
                steps = layer.run(steps)
            encoded = ad.concat(steps, axis=0)  # (T*B, e)
        else:
            flat = ad.tensor(X.transpose(1, 0, 2).reshape(T * batch, self.n_features))
            if z is None:
                fused = flat
            else:
                fused = ad.concat([ad.tile_rows(z, T) if T > 1 else z, flat], axis=1)
            encoded = self.seq_layers[0](fused)
        return self.head(encoded)

    def standardize_targets(self, rows: Sequence[Row]) -> np.ndarray:
        """Matching (T*B, 1) standardized target block."""
        y = np.stack([r.target for r in rows])  # (B, T)
        return ((y - self.y_mean) / self.y_std).T.reshape(-1, 1)

    def predict_rows(self, rows: Sequence[Row]) -> np.ndarray:
        """De-standardized predictions, shape (B, T)."""
        out = self.forward_rows(rows).data
        T = rows[0].features.shape[0]
        series = out.reshape(T, len(rows)).T
        return series * self.y_std + self.y_mean

    # -- input building -----------------------------------------------------

    def encode_caption(self, text: str) -> list[int]:
        require(self.config.uses_text, "model has no caption path")
        require(bool(text.strip()), "caption text is empty")
        return self.vocab.encode(text)

    def make_row(self, features: np.ndarray, caption: Optional[str] = None,
                 attributes: Optional[Mapping] = None,
                 target: Optional[np.ndarray] = None,
                 system_id: str = "") -> Row:
        tokens = onehot = None
        if self.config.uses_text:
            require(caption is not None, "this model expects a caption")
            tokens = self.encode_caption(caption)
        elif self.config.attribute_path == "onehot":
            require(attributes is not None, "this model expects structured attributes")
            onehot = self.onehot_encoder.encode_one(attributes)
        return Row(features=features, tokens=tokens, onehot=onehot,
                   target=target, system_id=system_id)


# ---------------------------------------------------------------------------
# checkpoint format: magic, u32 header length, JSON header, raw float64 blobs

CHECKPOINT_MAGIC = b"STXCKPT1"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, model: Surrogate, meta: Optional[dict] = None) -> None:
    params = model.params()
    names = sorted(params)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "n_features": model.n_features,
        "family": model.family,
        "y_mean": model.y_mean,
        "y_std": model.y_std,
        "training_ranges": {k: list(v) for k, v in model.training_ranges.items()},
        "dataset_id": model.dataset_id,
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "vocab": model.vocab.to_json() if model.vocab else None,
        "onehot": _onehot_state(model.onehot_encoder),
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(params[n].data.astype("<f8").tobytes())


def _onehot_state(enc: Optional[OneHotAttributeEncoder]) -> Optional[dict]:
    if enc is None:
        return None
    return {
        "schema": enc.schema.to_json(),
        "attribute_names": enc.attribute_names_,
        "means": enc.means_,
        "stds": enc.stds_,
    }


def _restore_onehot(state: Optional[dict]) -> Optional[OneHotAttributeEncoder]:
    if state is None:
        return None
    schema = AttributeSchema.from_json(state["schema"])
    enc = OneHotAttributeEncoder(schema, attributes=state["attribute_names"])
    enc.attribute_names_ = list(state["attribute_names"])
    enc.slots_ = {}
    offset = 0
    for name in enc.attribute_names_:
        spec = schema.spec(name)
        width = len(spec.categories) if spec.kind == "categorical" else 1
        enc.slots_[name] = (offset, width)
        offset += width
    enc.width_ = offset
    enc.means_ = {k: float(v) for k, v in state["means"].items()}
    enc.stds_ = {k: float(v) for k, v in state["stds"].items()}
    return enc


def load_checkpoint(path) -> Surrogate:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        require(magic == CHECKPOINT_MAGIC,
                f"not a checkpoint file (magic {magic!r})")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length))
        require(header["format_version"] == CHECKPOINT_VERSION,
                f"unsupported checkpoint version {header['format_version']}")
        vocab = Vocabulary.from_json(header["vocab"]) if header["vocab"] else None
        onehot = _restore_onehot(header["onehot"])
        model = Surrogate(SurrogateConfig(**header["config"]),
                          n_features=header["n_features"], vocab=vocab,
                          onehot_encoder=onehot, family=header["family"])
        model.y_mean = header["y_mean"]
        model.y_std = header["y_std"]
        model.training_ranges = {k: (v[0], v[1])
                                 for k, v in header["training_ranges"].items()}
        model.dataset_id = header.get("dataset_id")
        params = model.params()
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            n_bytes = int(np.prod(shape)) * 8
            raw = fh.read(n_bytes)
            require(len(raw) == n_bytes, "checkpoint truncated")
            params[entry["name"]].data = np.frombuffer(raw, dtype="<f8")\
                .reshape(shape).copy()
    return model


def checkpoint_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
