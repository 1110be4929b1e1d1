import json

import numpy as np
import pytest

from conceptvlm.errors import InputError
from conceptvlm.scenario import (
    IMAGE_SIZE,
    generate_scenario,
    load_scenario,
    save_scenario,
    shape_mask,
    third_of,
)


@pytest.fixture(scope="module")
def scenario():
    return generate_scenario(m=2, n=10, seed=1)


def test_counts(scenario):
    assert scenario.m == 2 and scenario.n == 10
    assert len(scenario.meta["train"]["concept1"]) == 10
    assert len(scenario.meta["train"]["concept2"]) == 10
    assert sum(1 for k in scenario.images if k.startswith("concepts/")) == 20
    assert len(scenario.masks) == 20
    assert len(scenario.meta["test_single"]) == 10
    assert len(scenario.meta["test_multi"]) == 5
    assert len(scenario.meta["external_train"]) == 100
    assert len(scenario.meta["external_single"]) == 50
    assert len(scenario.meta["external_multi"]) == 50


def test_concept_appearance_is_stable(scenario):
    specs = scenario.concepts
    assert len({s.identifier for s in specs}) == 2
    assert specs[0].color != specs[1].color
    assert specs[0].shape != specs[1].shape


def test_mask_covers_exactly_shape_pixels(scenario):
    # pixel-color membership oracle: masked pixels are near the concept color,
    # unmasked pixels are not
    spec = scenario.concepts[0]
    rec = scenario.train_records(spec.concept_id)[0]
    img = scenario.image(rec["image"]).astype(float)
    mask = scenario.mask(rec["mask"])
    rgb = np.asarray(spec.rgb, dtype=float)
    inside = np.abs(img[mask] - rgb).max()
    assert inside < 30  # noise only
    outside = img[~mask]
    dist = np.abs(outside - rgb).max(axis=1)
    assert (dist > 60).all()
    # and the mask equals the generator geometry exactly
    expect = shape_mask(spec.shape, IMAGE_SIZE, rec["cx"], rec["cy"], spec.radius)
    np.testing.assert_array_equal(mask, expect)


def test_multi_images_disjoint_shapes(scenario):
    for rec in scenario.meta["test_multi"]:
        placements = rec["placements"]
        masks = [
            shape_mask(scenario.concept(cid).shape, IMAGE_SIZE, p["cx"], p["cy"], 8)
            for cid, p in placements.items()
        ]
        overlap = np.logical_and.reduce([masks[0], masks[1]])
        assert not overlap.any()
        # recorded thirds match recorded centers
        for cid, p in placements.items():
            assert third_of(p["cx"]) == p["third"]


def test_determinism():
    a = generate_scenario(m=2, n=3, seed=9)
    b = generate_scenario(m=2, n=3, seed=9)
    assert a.meta == b.meta
    for key in a.images:
        np.testing.assert_array_equal(a.images[key], b.images[key])


def test_third_boundaries():
    assert third_of(0) == "left"
    assert third_of(IMAGE_SIZE / 3) == "left"  # boundary to the lower third
    assert third_of(IMAGE_SIZE / 3 + 0.01) == "middle"
    assert third_of(2 * IMAGE_SIZE / 3) == "middle"
    assert third_of(IMAGE_SIZE - 1) == "right"


def test_concept_count_range():
    with pytest.raises(InputError):
        generate_scenario(m=5, n=2, seed=0)
    with pytest.raises(InputError):
        generate_scenario(m=0, n=2, seed=0)
    with pytest.raises(InputError):
        generate_scenario(m=2, n=0, seed=0)


def test_save_load_round_trip(tmp_path):
    scenario = generate_scenario(m=2, n=2, seed=4, n_external_train=5,
                                 n_external_single=3, n_external_multi=3)
    out = str(tmp_path / "scn")
    save_scenario(scenario, out)
    loaded = load_scenario(out)
    assert loaded.meta == scenario.meta
    for key, img in scenario.images.items():
        np.testing.assert_array_equal(loaded.images[key], img)
    for key, mask in scenario.masks.items():
        np.testing.assert_array_equal(loaded.masks[key], mask)


def test_rerun_byte_identical_meta(tmp_path):
    for sub in ("a", "b"):
        scn = generate_scenario(m=1, n=2, seed=7, n_external_train=3,
                                n_external_single=2, n_external_multi=2)
        save_scenario(scn, str(tmp_path / sub))
    meta_a = (tmp_path / "a" / "meta.json").read_bytes()
    meta_b = (tmp_path / "b" / "meta.json").read_bytes()
    assert meta_a == meta_b
