"""Forward-backward kernel selection.

The compiled Cython kernel is preferred; the pure-Python kernel is used
when the extension was not built or when ``SEIZCHMM_PURE=1`` is set.
"""

import os

if os.environ.get("SEIZCHMM_PURE") == "1":
    from ._fb_py import chain_forward_backward

    FB_BACKEND = "python"
else:
    try:
        from ._fb_cy import chain_forward_backward

        FB_BACKEND = "cython"
    except ImportError:
        from ._fb_py import chain_forward_backward

        FB_BACKEND = "python"

__all__ = ["chain_forward_backward", "FB_BACKEND"]
