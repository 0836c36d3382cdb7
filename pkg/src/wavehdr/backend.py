"""Convolution backend selection.

Two interchangeable kernel implementations exist:

* ``wavehdr._conv_numba`` -- nested loops compiled with ``numba.njit``
  (single-threaded, no fastmath, so results are bitwise deterministic);
* ``wavehdr._conv_numpy`` -- vectorised pure-numpy fallback.

The environment variable ``WAVEHDR_BACKEND`` picks one:

* ``auto`` (default) -- numba if importable, else numpy;
* ``numba`` -- require numba, raise ``ConfigError`` if unavailable;
* ``numpy`` -- force the pure-numpy path.

Selection happens once at import time; ``active_backend()`` reports the
result.  Both backends implement the same functions with identical
signatures and (up to floating-point summation order) identical outputs,
which ``tests/test_backends.py`` checks explicitly.
"""

import os

from wavehdr.errors import ConfigError

ENV_VAR = "WAVEHDR_BACKEND"
_CHOICES = ("auto", "numba", "numpy")


def _select():
    choice = os.environ.get(ENV_VAR, "auto").strip().lower()
    if choice not in _CHOICES:
        raise ConfigError(
            f"{ENV_VAR}={choice!r} is not valid; expected one of {_CHOICES}")
    if choice == "numpy":
        from wavehdr import _conv_numpy
        return _conv_numpy
    try:
        from wavehdr import _conv_numba
        return _conv_numba
    except ImportError:
        if choice == "numba":
            raise ConfigError(
                f"{ENV_VAR}=numba was requested but numba is not importable")
        from wavehdr import _conv_numpy
        return _conv_numpy


_impl = _select()

conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_weight = _impl.conv2d_backward_weight
conv3d_forward = _impl.conv3d_forward
conv3d_backward_input = _impl.conv3d_backward_input
conv3d_backward_weight = _impl.conv3d_backward_weight


def active_backend() -> str:
    """Name of the kernel implementation in use: ``"numba"`` or ``"numpy"``."""
    return _impl.NAME
