# Copyright 2026 the floss authors
# SPDX-License-Identifier: Apache-2.0
"""Flow matching for single-channel source separation."""

try:
    # installed wheel layout: the extension lives inside the package
    from ._floss import (
        Model,
        best_perm_score,
        evaluate,
        selftest,
        si_sdr,
        snr_to_t,
        train,
    )
except ImportError:
    # build-tree layout: the extension sits on PYTHONPATH next to the build
    from _floss import (
        Model,
        best_perm_score,
        evaluate,
        selftest,
        si_sdr,
        snr_to_t,
        train,
    )

__all__ = [
    "Model",
    "best_perm_score",
    "evaluate",
    "selftest",
    "si_sdr",
    "snr_to_t",
    "train",
]
