from . import counterexample, decompose, microlocal, norms, selftest, solve

__all__ = ["counterexample", "decompose", "microlocal", "norms", "selftest", "solve"]
