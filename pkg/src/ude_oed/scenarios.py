"""The scenario mini-language: <sampling>-<controls>-<reduction>.

Examples: ``w0-u0-c`` (equidistant sampling, zero controls, no
reduction), ``w*-u*-svd2`` (optimized sampling and controls, two-mode
spectral reduction).  Canonical strings round-trip exactly through
parse/format.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, ScenarioParseError
from .sensitivity import ReductionStrategy, strategy_from_tag, strategy_tag

__all__ = ["ScenarioSpec", "parse_scenario", "format_scenario"]

_W_POLICIES = {"w*": "optimized", "w0": "equidistant"}
_U_POLICIES = {"u*": "optimized", "u0": "zero"}
_W_TOKENS = {v: k for k, v in _W_POLICIES.items()}
_U_TOKENS = {v: k for k, v in _U_POLICIES.items()}


@dataclass(frozen=True)
class ScenarioSpec:
    w_policy: str  # "optimized" | "equidistant"
    u_policy: str  # "optimized" | "zero"
    strategy: ReductionStrategy

    def __str__(self) -> str:
        return format_scenario(self)


def parse_scenario(s: str) -> ScenarioSpec:
    """Parse a scenario string; errors carry the offending position."""
    parts = s.split("-")
    if len(parts) != 3:
        raise ScenarioParseError(
            f"scenario {s!r} must have three dash-separated fields", position=0
        )
    w_tok, u_tok, a_tok = parts
    if w_tok not in _W_POLICIES:
        raise ScenarioParseError(
            f"bad sampling field {w_tok!r} in {s!r} (want w* or w0)", position=0
        )
    pos_u = len(w_tok) + 1
    if u_tok not in _U_POLICIES:
        raise ScenarioParseError(
            f"bad control field {u_tok!r} in {s!r} (want u* or u0)", position=pos_u
        )
    pos_a = pos_u + len(u_tok) + 1
    try:
        strategy = strategy_from_tag(a_tok)
    except ConfigError as exc:
        raise ScenarioParseError(f"{exc} in {s!r}", position=pos_a) from exc
    return ScenarioSpec(_W_POLICIES[w_tok], _U_POLICIES[u_tok], strategy)


def format_scenario(spec: ScenarioSpec) -> str:
    return "-".join(
        [_W_TOKENS[spec.w_policy], _U_TOKENS[spec.u_policy], strategy_tag(spec.strategy)]
    )
