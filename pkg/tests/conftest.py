"""Shared fixtures. Session-scoped where construction is expensive."""

from __future__ import annotations

import pytest

from planforge.benchgen import CatalogConfig, generate_catalog
from planforge.registry import ToolRegistry, default_registry


@pytest.fixture(scope="session")
def registry() -> ToolRegistry:
    return default_registry()


@pytest.fixture(scope="session")
def catalog(registry: ToolRegistry):
    return generate_catalog(CatalogConfig())
