import numpy as np
import pytest

from rmopp.errors import ConfigError
from rmopp.filtering import FilterThresholds
from rmopp.formats import dataset_bytes
from rmopp.model import validate_dataset
from rmopp.sweep import evaluate_point
from rmopp.synth import SynthConfig, generate_synthetic


def test_same_seed_same_bytes():
    cfg = SynthConfig(num_images=20, seed=7)
    assert dataset_bytes(generate_synthetic(cfg)) == dataset_bytes(generate_synthetic(cfg))
    assert dataset_bytes(generate_synthetic(cfg)) != dataset_bytes(generate_synthetic(SynthConfig(num_images=20, seed=8)))


def test_output_is_valid():
    ds = generate_synthetic(SynthConfig(num_images=30, loc_noise_sigma=40.0, seed=3))
    assert validate_dataset(ds) == ds
    assert ds.num_ground_truth == 30 * 5


def test_noiseless_detector_is_perfect():
    cfg = SynthConfig(num_images=50, loc_noise_sigma=0.0, confusion_rate=0.0, spurious_rate=0.0, seed=1)
    cell = evaluate_point(generate_synthetic(cfg), FilterThresholds(1, 0))
    assert cell.precision == 1.0 and cell.recall == 1.0


def test_confusion_rate_is_respected():
    ds = generate_synthetic(SynthConfig(num_images=2000, confusion_rate=0.3, spurious_rate=0.0, seed=5))
    wrong = [
        d.top_class != g.class_index
        for img in ds.ground_truth
        for d, g in zip(ds.detections[img], ds.ground_truth[img])
    ]
    assert np.mean(wrong) == pytest.approx(0.3, abs=0.02)


@pytest.mark.parametrize("confusion", [0.0, 0.2, 0.5])
def test_keep_all_recall_is_capped_by_confusion(confusion):
    # one detection per object, so a confused object can never be matched
    ds = generate_synthetic(SynthConfig(num_images=200, confusion_rate=confusion, seed=11))
    cell = evaluate_point(ds, FilterThresholds(1, 0))
    sigma = (confusion * (1 - confusion) / ds.num_ground_truth) ** 0.5
    assert cell.recall <= 1 - confusion + 4 * sigma
    assert cell.recall >= 1 - confusion - 0.05


def test_spurious_count_follows_rate():
    ds = generate_synthetic(SynthConfig(num_images=1000, objects_per_image=0, spurious_rate=3.0, seed=2))
    assert ds.num_detections / 1000 == pytest.approx(3.0, abs=0.2)


@pytest.mark.parametrize(
    "kwargs",
    [{"num_classes": 1}, {"confusion_rate": 1.5}, {"spurious_rate": -1}, {"loc_noise_sigma": -0.1}, {"num_images": -1}],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SynthConfig(**kwargs)
