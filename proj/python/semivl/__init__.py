"""Python bindings for the semivl C++ library.

Datasets are dicts of numpy arrays: ``waveform`` [n, 157], ``range_error`` (NaN when
unlabeled), ``env_label`` / ``material_label`` (-1 when unlabeled) and ``measured_distance``.
Configuration is passed as ``overrides``, a dict of config keys to string values
(see ``config_keys()``) applied on top of the ``full`` or ``desk`` profile.
"""

from ._semivl import (
    WAVEFORM_LENGTH,
    CheckpointError,
    DatasetError,
    Model,
    TrainingDiverged,
    ablation,
    config_keys,
    generate,
    gradcheck,
    kl_gaussian_diag,
    load_checkpoint,
    load_dataset,
    resolve_config,
    sweep,
    train,
    write_dataset,
)

__all__ = [
    "WAVEFORM_LENGTH",
    "CheckpointError",
    "DatasetError",
    "Model",
    "TrainingDiverged",
    "ablation",
    "config_keys",
    "generate",
    "gradcheck",
    "kl_gaussian_diag",
    "load_checkpoint",
    "load_dataset",
    "resolve_config",
    "sweep",
    "train",
    "write_dataset",
]
