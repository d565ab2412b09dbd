"""T-function laboratory over truncated 2-adic integers."""
from . import analysis, ergodicity, generators, kernels, texpr, word2
from .ergodicity import ERGODIC, MP, PROVEN, REFUTED, UNKNOWN, Verdict
from .texpr import TExpr, parse
from .word2 import Word

__version__ = "0.1.0"

__all__ = [
    "analysis", "ergodicity", "generators", "kernels", "texpr", "word2",
    "ERGODIC", "MP", "PROVEN", "REFUTED", "UNKNOWN", "Verdict", "TExpr", "parse", "Word",
]
