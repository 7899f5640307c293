"""Decentralized switched fuzzy output-feedback synthesis pipeline."""

import json as _json

from ._core import Error, simulate, synthesize, validate
from ._core import verify_json as _verify_json

__version__ = "0.1.0"

__all__ = ["Error", "validate", "synthesize", "simulate", "verify", "__version__"]


def verify(system, controller, runs=20, sigma=0.01, tend=30.0, dt=1e-3, resynth=True):
    """Certify a stored controller against its system.

    Returns the verification report as a dict; ``report["pass"]`` is the
    overall verdict.
    """
    return _json.loads(
        _verify_json(system, controller, runs=runs, sigma=sigma, tend=tend, dt=dt,
                     resynth=resynth)
    )
