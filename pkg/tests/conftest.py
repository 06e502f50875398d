import numpy as np
import pytest

from csfn_dst.data_io import generate_toy_corpus
from csfn_dst.numerics import Parameter, grad_check
from csfn_dst.schema_graph import bundled_schema_path, load_schema

# criterion number -> PASS/FAIL line, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture(scope="session")
def toy_schema():
    return load_schema(bundled_schema_path("toy"))


@pytest.fixture(scope="session")
def mw_schema():
    return load_schema(bundled_schema_path("multiwoz21"))


@pytest.fixture(scope="session")
def toy_corpus(toy_schema):
    return generate_toy_corpus(toy_schema, 200, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def params64(rng, *shapes, scale=1.0):
    return [Parameter(rng.normal(0, scale, size=s), name=f"p{i}") for i, s in enumerate(shapes)]


def assert_grads(fn, params, tol=1e-4, per_param=None):
    report = grad_check(fn, params, tol=tol, per_param=per_param)
    assert report.passed, report.worst
    return report
