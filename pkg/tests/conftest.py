import numpy as np
import pytest
from hypothesis import strategies as st

from rmopp.model import Dataset, Detection, GroundTruthBox


def det(probs, objectness=1.0, bbox=(0.0, 0.0, 10.0, 10.0), image_id="a"):
    return Detection(image_id, tuple(float(b) for b in bbox), tuple(float(p) for p in probs), float(objectness))


def gt(cls, bbox=(0.0, 0.0, 10.0, 10.0), image_id="a"):
    return GroundTruthBox(image_id, cls, tuple(float(b) for b in bbox))


def random_probs(rng: np.random.Generator, n: int) -> tuple[float, ...]:
    """Random valid probability vector, sometimes with ties or exact zeros."""
    kind = rng.integers(4)
    if kind == 0:
        p = rng.dirichlet(np.full(n, 0.3))
    elif kind == 1:
        p = rng.dirichlet(np.ones(n))
    elif kind == 2:
        p = np.zeros(n)
        k = rng.integers(1, min(n, 3) + 1)
        p[rng.choice(n, size=k, replace=False)] = 1.0 / k
    else:
        p = np.zeros(n)
        p[rng.integers(n)] = 1.0
    return tuple(float(x) for x in p)


def random_box(rng: np.random.Generator, canvas=100.0, max_side=40.0):
    w, h = rng.uniform(1.0, max_side, size=2)
    x, y = rng.uniform(0.0, canvas - w), rng.uniform(0.0, canvas - h)
    return (float(x), float(y), float(x + w), float(y + h))


def random_detection(rng, n_classes, image_id="a", canvas=100.0):
    return Detection(image_id, random_box(rng, canvas), random_probs(rng, n_classes), float(rng.uniform(0.0, 1.0)))


def random_dataset(rng, n_images=5, n_classes=4, max_dets=12, max_gts=6, canvas=100.0) -> Dataset:
    dets, gts = {}, {}
    for k in range(n_images):
        img = f"i{k}"
        gts[img] = tuple(
            GroundTruthBox(img, int(rng.integers(n_classes)), random_box(rng, canvas)) for _ in range(rng.integers(0, max_gts + 1))
        )
        dets[img] = tuple(random_detection(rng, n_classes, img, canvas) for _ in range(rng.integers(0, max_dets + 1)))
    return Dataset(dets, gts, n_classes)


@st.composite
def prob_vectors(draw, min_size=2, max_size=6):
    """Probability vectors summing to 1 within float error, ties allowed."""
    n = draw(st.integers(min_size, max_size))
    weights = draw(st.lists(st.integers(0, 5), min_size=n, max_size=n).filter(lambda w: sum(w) > 0))
    total = sum(weights)
    return tuple(w / total for w in weights)


@st.composite
def detections(draw, min_classes=2, max_classes=6, image_id="a"):
    probs = draw(prob_vectors(min_classes, max_classes))
    obj = draw(st.floats(0.0, 1.0))
    x = draw(st.floats(0, 50))
    y = draw(st.floats(0, 50))
    w = draw(st.floats(0.5, 30))
    h = draw(st.floats(0.5, 30))
    return Detection(image_id, (x, y, x + w, y + h), probs, obj)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ----------------------------------------------------

_ACCEPTANCE: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for key, value in report.user_properties:
        if key == "criterion":
            _ACCEPTANCE.append((value, report.outcome.upper()))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE:
        terminalreporter.write_line(f"{outcome:<8} {name}")
