import os
from dataclasses import dataclass, fields, asdict
from dotenv import load_dotenv, dotenv_values

from utils.custom_exception import ConfigurationError

load_dotenv()

DATA_ROOT = os.getenv("DICOH_DATA_ROOT", "data")
RUNS_DIR = os.getenv("DICOH_RUNS_DIR", "runs")

EMBEDDING_DIM = 300
PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"
DAILYDIALOG_LABELS = ("Inform", "Question", "Directive", "Commissive")
PROBLEM_DOMAINS = ("uo", "ui", "ur", "euo")
REGIMES = ("s-dicoh", "m-dicoh", "s-dap", "m-dap")


class BaseConfig:
    """Hyperparameters shared by every preset"""
    SEED = 42
    LEARNING_RATE = 0.0005
    DROPOUT_P = 0.1
    N_MAX = 40
    REGIME = "m-dicoh"
    UTT_HIDDEN = 128
    DIAL_HIDDEN = 256
    EMBEDDING_DIM = EMBEDDING_DIM
    EMBEDDINGS = ""
    TRAINABLE_EMBEDDINGS = True
    DAP_AFTER_DROPOUT = False
    INIT_GAMMA = 2.0
    PER_DIALOGUE = 20
    OOV_SCALE = 0.05
    DA_LABELS = ""


class DailyDialogConfig(BaseConfig):
    """DailyDialog settings"""
    EPOCHS = 20
    BATCH_SIZE = 128


class SwitchboardConfig(BaseConfig):
    """SwitchBoard-style corpora: long dialogues, small batches"""
    EPOCHS = 10
    BATCH_SIZE = 16


class DeskConfig(BaseConfig):
    """Scaled-down runs that finish on one CPU core"""
    EPOCHS = 5
    BATCH_SIZE = 32
    UTT_HIDDEN = 32
    DIAL_HIDDEN = 64


class TestingConfig(BaseConfig):
    """Tiny dimensions for the test suite"""
    EPOCHS = 2
    BATCH_SIZE = 8
    N_MAX = 8
    UTT_HIDDEN = 4
    DIAL_HIDDEN = 4
    EMBEDDING_DIM = 6
    PER_DIALOGUE = 4


presets = {
    'dailydialog': DailyDialogConfig,
    'switchboard': SwitchboardConfig,
    'desk': DeskConfig,
    'testing': TestingConfig,
    'default': DailyDialogConfig
}


@dataclass
class RunConfig:
    """Fully resolved settings of one command invocation."""
    preset: str = "default"
    seed: int = BaseConfig.SEED
    epochs: int = DailyDialogConfig.EPOCHS
    batch_size: int = DailyDialogConfig.BATCH_SIZE
    learning_rate: float = BaseConfig.LEARNING_RATE
    dropout_p: float = BaseConfig.DROPOUT_P
    n_max: int = BaseConfig.N_MAX
    regime: str = BaseConfig.REGIME
    utt_hidden: int = BaseConfig.UTT_HIDDEN
    dial_hidden: int = BaseConfig.DIAL_HIDDEN
    embedding_dim: int = BaseConfig.EMBEDDING_DIM
    embeddings: str = BaseConfig.EMBEDDINGS
    trainable_embeddings: bool = BaseConfig.TRAINABLE_EMBEDDINGS
    dap_after_dropout: bool = BaseConfig.DAP_AFTER_DROPOUT
    init_gamma: float = BaseConfig.INIT_GAMMA
    per_dialogue: int = BaseConfig.PER_DIALOGUE
    oov_scale: float = BaseConfig.OOV_SCALE
    da_labels: str = BaseConfig.DA_LABELS

    @classmethod
    def from_preset(cls, name: str) -> "RunConfig":
        if name not in presets:
            raise ConfigurationError(f"Unknown preset '{name}', expected one of {sorted(presets)}")
        preset = presets[name]
        values = {f.name: getattr(preset, f.name.upper()) for f in fields(cls) if f.name != "preset"}
        return cls(preset=name, **values)

    def validate(self) -> "RunConfig":
        for key in ("epochs", "batch_size", "n_max", "utt_hidden", "dial_hidden",
                    "embedding_dim", "per_dialogue"):
            if getattr(self, key) <= 0:
                raise ConfigurationError(f"'{key}' must be positive, got {getattr(self, key)}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"'learning_rate' must be positive, got {self.learning_rate}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigurationError(f"'dropout_p' must lie in [0, 1), got {self.dropout_p}")
        if self.init_gamma <= 0:
            raise ConfigurationError(f"'init_gamma' must be positive, got {self.init_gamma}")
        if self.regime not in REGIMES:
            raise ConfigurationError(f"Unknown regime '{self.regime}', expected one of {list(REGIMES)}")
        if self.da_labels:
            names = [n.strip() for n in self.da_labels.split(",")]
            if any(not n for n in names) or len(set(names)) != len(names):
                raise ConfigurationError(f"'da_labels' must be distinct comma-separated names, got {self.da_labels!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path: str) -> None:
        """Write as a key=value file readable by load_run_config."""
        with open(path, "w", encoding="utf-8") as f:
            for key, value in self.to_dict().items():
                f.write(f"{key}={value}\n")


def _coerce(key: str, raw, target_type):
    if isinstance(raw, target_type) and not (target_type is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if target_type is bool:
            lowered = text.lower()
            if lowered in {"1", "true", "yes", "on"}:
                return True
            if lowered in {"0", "false", "no", "off"}:
                return False
            raise ValueError(text)
        return target_type(text)
    except ValueError as e:
        raise ConfigurationError(f"Invalid value for '{key}': {raw!r}", e)


def load_run_config(path: str = None, overrides: dict = None) -> RunConfig:
    """
    Resolve a RunConfig from a preset, an optional key=value file and flag overrides.

    Args:
        path: key=value configuration file (parsed with dotenv_values)
        overrides: values from command-line flags; None entries are ignored

    Returns:
        A validated RunConfig. Unknown keys raise ConfigurationError.
    """
    known = {f.name: f.type for f in fields(RunConfig)}
    types = {f.name: type(getattr(RunConfig(), f.name)) for f in fields(RunConfig)}

    file_values = {}
    if path:
        if not os.path.exists(path):
            raise ConfigurationError(f"Config file not found: {path}")
        file_values = {k.strip().lower(): v for k, v in dotenv_values(path).items()}
        unknown = sorted(set(file_values) - set(known))
        if unknown:
            raise ConfigurationError(f"Unknown config keys in {path}: {unknown}")

    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    unknown = sorted(set(overrides) - set(known))
    if unknown:
        raise ConfigurationError(f"Unknown config keys: {unknown}")

    preset = overrides.get("preset") or file_values.get("preset") or "default"
    config = RunConfig.from_preset(preset)
    for source in (file_values, overrides):
        for key, raw in source.items():
            if key == "preset" or raw is None:
                continue
            setattr(config, key, _coerce(key, raw, types[key]))
    return config.validate()
