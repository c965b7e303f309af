import numpy as np
import pytest

from visualwords.dataset import (
    DatasetSplit,
    ManifestEntry,
    load_grayscale,
    load_manifest,
    loo_folds,
    split_identity_disjoint,
    write_manifest,
    write_pgm,
)
from visualwords.errors import DataError


def make_entries(identities, per_identity=2, label="happy"):
    out = []
    for ident in identities:
        for i in range(per_identity):
            out.append(ManifestEntry(f"/img/{ident}_{i}.pgm", label, ident))
    return out


class TestManifest:
    def test_parse_three_rows(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(
            "path,label,identity\n"
            "a.pgm,happy,s01\n"
            "b.pgm,anger,s01\n"
            "c.pgm,happy,s02\n",
            encoding="utf-8",
        )
        entries = load_manifest(str(p))
        assert len(entries) == 3
        assert {e.class_label for e in entries} == {"happy", "anger"}
        assert entries[0].image_path == str(tmp_path / "a.pgm")

    def test_absolute_paths_kept(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(
            "path,label,identity\n/abs/x.pgm,happy,s01\n", encoding="utf-8"
        )
        assert load_manifest(str(p))[0].image_path == "/abs/x.pgm"

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_manifest(str(tmp_path / "nope.csv"))

    def test_header_only_is_empty(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("path,label,identity\n", encoding="utf-8")
        with pytest.raises(DataError, match="empty manifest"):
            load_manifest(str(p))

    def test_bad_header(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("file,class,id\na,b,c\n", encoding="utf-8")
        with pytest.raises(DataError, match="header"):
            load_manifest(str(p))

    def test_wrong_column_count_names_line(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("path,label,identity\na.pgm,happy\n", encoding="utf-8")
        with pytest.raises(DataError, match=":2:"):
            load_manifest(str(p))

    def test_duplicate_path_rejected(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(
            "path,label,identity\na.pgm,happy,s01\na.pgm,anger,s02\n",
            encoding="utf-8",
        )
        with pytest.raises(DataError, match="duplicate"):
            load_manifest(str(p))

    def test_round_trip(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(
            "path,label,identity\na.pgm,happy,s01\nsub/b.pgm,anger,s02\n",
            encoding="utf-8",
        )
        entries = load_manifest(str(p))
        q = tmp_path / "copy.csv"
        write_manifest(str(q), entries)
        assert load_manifest(str(q)) == entries


class TestSplit:
    def test_ten_identities_fraction_70(self):
        entries = make_entries([f"s{i:02d}" for i in range(10)], per_identity=1)
        split = split_identity_disjoint(entries, 0.7, seed=0)
        assert len(split.train) == 7
        assert len(split.test) == 3
        assert split.train_identities() & split.test_identities() == set()

    def test_two_identities_half(self):
        entries = make_entries(["a", "b"], per_identity=3)
        split = split_identity_disjoint(entries, 0.5, seed=1)
        assert len(split.train_identities()) == 1
        assert len(split.test_identities()) == 1

    def test_partition_property(self):
        entries = make_entries([f"s{i}" for i in range(6)], per_identity=4)
        split = split_identity_disjoint(entries, 0.6, seed=3)
        assert len(split.train) + len(split.test) == len(entries)
        assert set(split.train) | set(split.test) == set(entries)

    def test_deterministic(self):
        entries = make_entries([f"s{i}" for i in range(8)], per_identity=2)
        a = split_identity_disjoint(entries, 0.7, seed=9)
        b = split_identity_disjoint(entries, 0.7, seed=9)
        assert a == b

    def test_seed_changes_assignment(self):
        entries = make_entries([f"s{i}" for i in range(12)], per_identity=1)
        ids = {
            frozenset(
                split_identity_disjoint(entries, 0.5, seed=s).train_identities()
            )
            for s in range(8)
        }
        assert len(ids) > 1

    def test_bad_fraction(self):
        entries = make_entries(["a", "b"])
        for frac in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(DataError):
                split_identity_disjoint(entries, frac, seed=0)

    def test_single_identity_rejected(self):
        with pytest.raises(DataError, match="2 distinct identities"):
            split_identity_disjoint(make_entries(["only"]), 0.7, seed=0)


class TestLooFolds:
    def test_one_fold_per_identity(self):
        entries = make_entries(["a", "b", "c"], per_identity=2)
        folds = loo_folds(entries)
        assert [f.identity for f in folds] == ["a", "b", "c"]
        for f in folds:
            assert all(e.identity == f.identity for e in f.held_out)
            assert all(e.identity != f.identity for e in f.remainder)
            assert len(f.held_out) + len(f.remainder) == len(entries)

    def test_union_of_held_out_is_train_set(self):
        entries = make_entries([f"s{i}" for i in range(7)], per_identity=3)
        folds = loo_folds(entries)
        assert len(folds) == 7
        held = [e for f in folds for e in f.held_out]
        assert sorted(held, key=lambda e: e.image_path) == sorted(
            entries, key=lambda e: e.image_path
        )

    def test_single_identity_rejected(self):
        with pytest.raises(DataError, match="at least 2"):
            loo_folds(make_entries(["solo"], per_identity=5))


class TestImages:
    def test_black_and_white_pgm(self, tmp_path):
        for value, expected in ((0.0, 0.0), (1.0, 1.0)):
            p = tmp_path / f"v{expected}.pgm"
            write_pgm(str(p), np.full((40, 40), value))
            img = load_grayscale(str(p))
            assert img.shape == (40, 40)
            assert (img == expected).all()

    def test_pgm_round_trip_quantized(self, tmp_path):
        rng = np.random.default_rng(0)
        original = rng.random((33, 47))
        p = tmp_path / "r.pgm"
        write_pgm(str(p), original)
        loaded = load_grayscale(str(p))
        assert loaded.shape == original.shape
        assert np.abs(loaded - original).max() <= 0.5 / 255.0 + 1e-12

    def test_rgb_png_luminance(self, tmp_path):
        from PIL import Image as PILImage

        arr = np.zeros((32, 32, 3), dtype=np.uint8)
        arr[..., 0] = 255
        p = tmp_path / "red.png"
        PILImage.fromarray(arr, mode="RGB").save(p)
        img = load_grayscale(str(p))
        np.testing.assert_allclose(img, 0.299, atol=1e-9)

    def test_grayscale_png(self, tmp_path):
        from PIL import Image as PILImage

        arr = np.full((32, 32), 128, dtype=np.uint8)
        p = tmp_path / "g.png"
        PILImage.fromarray(arr, mode="L").save(p)
        np.testing.assert_allclose(load_grayscale(str(p)), 128 / 255)

    def test_corrupt_file(self, tmp_path):
        p = tmp_path / "junk.pgm"
        p.write_bytes(b"not an image at all")
        with pytest.raises(DataError, match="cannot read"):
            load_grayscale(str(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_grayscale(str(tmp_path / "absent.png"))


def test_split_dataclass_helpers():
    entries = make_entries(["a", "b"])
    split = DatasetSplit(train=entries[:2], test=entries[2:])
    assert split.train_identities() == {"a"}
    assert split.test_identities() == {"b"}
