import math
from pathlib import Path

import numpy as np
import pytest

from metastab.cli import load_spec
from metastab.hierarchy import build_hierarchy
from metastab.landscape import CoefficientSpec, find_equilibria

SPECS = Path(__file__).resolve().parents[1] / "specs"


def spec_file(name: str) -> Path:
    return SPECS / f"{name}.spec"


def L1_spec() -> CoefficientSpec:
    """a = 1, b = sin 2 pi (x - 1/8)."""
    s = math.sin(2 * math.pi / 8)
    return CoefficientSpec(1.0, b_cos=[-s], b_sin=[s])


def random_spec(rng: np.random.Generator, zero_tilt: bool = False) -> CoefficientSpec:
    """Generic trigonometric landscape with at most three harmonics."""
    h = int(rng.integers(1, 4))
    b_cos = rng.normal(size=h)
    b_sin = rng.normal(size=h)
    if zero_tilt:
        # constant a and mean-free b give a periodic potential
        return CoefficientSpec(float(rng.uniform(0.5, 2.0)), b_cos=b_cos, b_sin=b_sin)
    a_cos = 0.3 * rng.uniform(-1, 1, h) / np.arange(1, h + 1)
    a_sin = 0.3 * rng.uniform(-1, 1, h) / np.arange(1, h + 1)
    return CoefficientSpec(1.0, a_cos, a_sin, b_cos, b_sin, b_const=0.2 * rng.normal())


def random_suite(seed: int, count: int, zero_tilt: bool = False):
    """``count`` generic landscapes; non-generic draws are skipped, not counted."""
    from metastab.errors import ValidationError

    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        spec = random_spec(rng, zero_tilt)
        try:
            out.append(find_equilibria(spec))
        except ValidationError:
            continue
    return out


@pytest.fixture(scope="session")
def L1():
    return find_equilibria(L1_spec())


@pytest.fixture(scope="session")
def L1h(L1):
    return build_hierarchy(L1)


@pytest.fixture(scope="session")
def L2spec():
    return load_spec(spec_file("L2"))


@pytest.fixture(scope="session")
def L2(L2spec):
    return find_equilibria(L2spec)


@pytest.fixture(scope="session")
def L2h(L2):
    return build_hierarchy(L2)


@pytest.fixture(scope="session")
def sym2h():
    return build_hierarchy(find_equilibria(load_spec(spec_file("sym2"))))


@pytest.fixture(scope="session")
def tiedh():
    return build_hierarchy(find_equilibria(load_spec(spec_file("tied"))))
