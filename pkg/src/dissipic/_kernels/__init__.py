"""Kernel backend selection: compiled Cython module with numpy fallback.

Set DISSIPIC_PURE_PYTHON=1 to force the fallback (used by the benchmark
and by tests checking backend parity).
"""
import os

if os.environ.get("DISSIPIC_PURE_PYTHON"):
    from . import _py as _impl
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _py as _impl

BACKEND = _impl.BACKEND
ACT_TANH = _impl.ACT_TANH
ACT_RELU = _impl.ACT_RELU
ACT_ZERO = _impl.ACT_ZERO

fixed_point = _impl.fixed_point
controller_step = _impl.controller_step

_ACT_IDS = {"tanh": ACT_TANH, "relu": ACT_RELU, "zero": ACT_ZERO}


def activation_id(name: str) -> int:
    try:
        return _ACT_IDS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; expected one of {sorted(_ACT_IDS)}") from None
