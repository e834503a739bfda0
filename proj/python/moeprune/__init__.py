"""Expert pruning toolkit for mixture-of-experts translation models."""

try:
    from ._moeprune import *  # noqa: F401,F403
    from ._moeprune import __doc__  # noqa: F401
except ImportError:  # in-tree builds put the extension directly on sys.path
    from _moeprune import *  # noqa: F401,F403
