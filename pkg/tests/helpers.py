"""Shared test helpers: scenario variants derived from the packaged default."""

from __future__ import annotations

from ckoord.scenario import apply_overrides, default_config


def cfg_with(*overrides: str) -> dict:
    """Default scenario with dotted-path overrides, CLI-style 'a.b.c=value'."""
    cfg = default_config()
    if overrides:
        cfg = apply_overrides(cfg, list(overrides))
    return cfg
