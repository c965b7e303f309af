import os

import numpy as np
import pytest

from visualwords.dataset import load_grayscale, load_manifest
from visualwords.errors import ConfigError
from visualwords.features.harris import HarrisParams, detect_harris
from visualwords.synth import IMAGE_SIZE, LABELS, generate_corpus, render_image


class TestRenderImage:
    def test_deterministic(self):
        a = render_image("checker", 0, 0, 3, 1)
        b = render_image("checker", 0, 0, 3, 1)
        assert np.array_equal(a, b)

    def test_shape_and_range(self):
        for ci, label in enumerate(LABELS):
            img = render_image(label, 0, ci, 0, 0)
            assert img.shape == (IMAGE_SIZE, IMAGE_SIZE)
            assert img.min() >= 0.0 and img.max() <= 1.0
            assert img.std() > 0.05

    def test_identities_differ(self):
        a = render_image("bricks", 0, 1, 0, 0)
        b = render_image("bricks", 0, 1, 1, 0)
        assert not np.array_equal(a, b)

    def test_images_of_one_identity_differ(self):
        a = render_image("spots", 0, 2, 0, 0)
        b = render_image("spots", 0, 2, 0, 1)
        assert not np.array_equal(a, b)

    def test_every_class_has_corners(self):
        params = HarrisParams()
        for ci, label in enumerate(LABELS):
            img = render_image(label, 0, ci, 0, 0)
            assert len(detect_harris(img, params)) >= 10, label


class TestGenerateCorpus:
    def test_counts_and_labels(self, tmp_path):
        manifest = generate_corpus(
            str(tmp_path), classes=3, per_class=6, identities=3, seed=0
        )
        entries = load_manifest(manifest)
        assert len(entries) == 18
        assert {e.class_label for e in entries} == set(LABELS)
        assert {e.identity for e in entries} == {"id00", "id01", "id02"}
        for e in entries:
            img = load_grayscale(e.image_path)
            assert img.shape == (IMAGE_SIZE, IMAGE_SIZE)

    def test_even_spread_over_identities(self, tmp_path):
        manifest = generate_corpus(
            str(tmp_path), classes=1, per_class=6, identities=3, seed=0
        )
        entries = load_manifest(manifest)
        per_identity = {}
        for e in entries:
            per_identity[e.identity] = per_identity.get(e.identity, 0) + 1
        assert per_identity == {"id00": 2, "id01": 2, "id02": 2}

    def test_remainder_goes_to_first_identities(self, tmp_path):
        manifest = generate_corpus(
            str(tmp_path), classes=1, per_class=7, identities=3, seed=0
        )
        entries = load_manifest(manifest)
        counts = [sum(1 for e in entries if e.identity == f"id{i:02d}") for i in range(3)]
        assert counts == [3, 2, 2]

    def test_regeneration_is_byte_identical(self, tmp_path):
        m1 = generate_corpus(str(tmp_path / "a"), classes=2, per_class=4,
                             identities=2, seed=5)
        m2 = generate_corpus(str(tmp_path / "b"), classes=2, per_class=4,
                             identities=2, seed=5)
        e1, e2 = load_manifest(m1), load_manifest(m2)
        assert [(e.class_label, e.identity) for e in e1] == [
            (e.class_label, e.identity) for e in e2
        ]
        for a, b in zip(e1, e2):
            with open(a.image_path, "rb") as fa, open(b.image_path, "rb") as fb:
                assert fa.read() == fb.read()
        with open(m1, "rb") as fa, open(m2, "rb") as fb:
            assert fa.read() == fb.read()

    def test_seed_changes_pixels(self, tmp_path):
        m1 = generate_corpus(str(tmp_path / "a"), classes=1, per_class=2,
                             identities=2, seed=0)
        m2 = generate_corpus(str(tmp_path / "b"), classes=1, per_class=2,
                             identities=2, seed=1)
        a = load_grayscale(load_manifest(m1)[0].image_path)
        b = load_grayscale(load_manifest(m2)[0].image_path)
        assert not np.array_equal(a, b)

    def test_manifest_paths_resolve(self, tmp_path):
        manifest = generate_corpus(str(tmp_path), classes=1, per_class=2,
                                   identities=2, seed=0)
        for e in load_manifest(manifest):
            assert os.path.isfile(e.image_path)

    def test_parameter_validation(self, tmp_path):
        with pytest.raises(ConfigError):
            generate_corpus(str(tmp_path), classes=0)
        with pytest.raises(ConfigError):
            generate_corpus(str(tmp_path), classes=4)
        with pytest.raises(ConfigError):
            generate_corpus(str(tmp_path), per_class=0)
        with pytest.raises(ConfigError):
            generate_corpus(str(tmp_path), identities=1)
        with pytest.raises(ConfigError):
            generate_corpus(str(tmp_path), size=16)
