import json
import math
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np


class Utils:
    @staticmethod
    def derive_seed(master_seed: int, *keys: int) -> int:
        """Derive an independent, reproducible 32-bit seed from a master seed and integer keys."""
        sequence = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, *map(int, keys)])
        return int(sequence.generate_state(1)[0])

    @staticmethod
    def rng(seed: int | None) -> np.random.Generator:
        return np.random.default_rng(seed)

    @staticmethod
    def to_builtin(value: Any) -> Any:
        """Convert numpy scalars/arrays, enums, paths and dataclasses into JSON-ready values."""
        if is_dataclass(value) and not isinstance(value, type):
            return Utils.to_builtin(asdict(value))
        if isinstance(value, dict):
            return {str(k): Utils.to_builtin(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [Utils.to_builtin(v) for v in value]
        if isinstance(value, np.ndarray):
            return Utils.to_builtin(value.tolist())
        if isinstance(value, Enum):
            return value.value
        if isinstance(value, Path):
            return str(value)
        if isinstance(value, np.integer):
            return int(value)
        if isinstance(value, (float, np.floating)):
            value = float(value)
            # JSON has no infinities; null marks an unavailable quantity
            return value if math.isfinite(value) else None
        if isinstance(value, np.bool_):
            return bool(value)
        return value

    @staticmethod
    def dump_json(data: Any, path: str | Path) -> Path:
        """Write JSON with sorted keys so equal content gives byte-identical files."""
        output_path = Path(path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with output_path.open("w") as f:
            json.dump(Utils.to_builtin(data), f, indent=2, sort_keys=True)
            f.write("\n")
        return output_path

    @staticmethod
    def load_json(path: str | Path) -> Any:
        with Path(path).open("r") as f:
            return json.load(f)
