"""Python access to the gridfm experiment core."""

import json as _json
from pathlib import Path as _Path

from ._core import (  # noqa: F401
    ConfigError,
    GridConfig,
    GridfmError,
    GridWorld,
    ParseError,
    UsageError,
    build_report,
    chi_square_critical,
    chi_square_statistic,
    compute_advantages,
    enumerate_transitions,
    parse_transition,
    render_template,
    run_experiment,
    template_names,
)


def run_config_file(path, **overrides):
    """Run the experiment described by a JSON config file."""
    text = _Path(path).read_text()
    _json.loads(text)  # surface syntax errors with Python's line numbers
    return run_experiment(text, **overrides)
