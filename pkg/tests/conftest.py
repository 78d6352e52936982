"""Shared fixtures.

Converged shooting results are expensive (seconds to tens of seconds), so one
session-wide :class:`AcceptanceContext` caches them for every test module.
"""

from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

from pmeshrink.acceptance import AcceptanceContext
from pmeshrink.params import Params, exponents

settings.register_profile(
    "default", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ctx() -> AcceptanceContext:
    return AcceptanceContext()


@pytest.fixture(scope="session")
def default_params() -> Params:
    return Params(2.0, 0.5, 2.0, 1)


@pytest.fixture(scope="session")
def default_exps(default_params):
    return exponents(default_params)


@pytest.fixture(scope="session")
def default_shot(ctx, default_params):
    return ctx.shoot(default_params)


@pytest.fixture(scope="session")
def lowsum_shot(ctx):
    return ctx.shoot(Params(1.2, 0.5, 6.0, 1))


@pytest.fixture(scope="session")
def self_similar(ctx):
    return ctx.self_similar()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
