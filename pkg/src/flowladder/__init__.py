"""flowladder: one ISWIM semantics, a ladder of progressively faster
equivalent abstract-machine engines, and the harness that proves they agree.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .syntax import ParseError, free_vars, node_count, parse, unparse  # noqa: F401
from .domains import concrete_policy, kcfa_policy  # noqa: F401
from .naive import evaluate_concrete  # noqa: F401
from .engine import (  # noqa: F401
    STAGES,
    AnalysisResult,
    Config,
    ConfigError,
    compare_stages,
    export_graph,
    run,
)
from .precision import precision_equal, precision_report, singleton_vars  # noqa: F401
