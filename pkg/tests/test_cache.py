import json
import threading

import pytest

from conftest import make_profile, make_space
from ktune.cache import CacheEntry, CacheKey, CacheStore, load_entry
from ktune.configspace import ParamDomain, ShapeKey
from ktune.errors import CacheVersionError
from ktune.executor import EnvFingerprint, SyntheticSession
from ktune.search import Exhaustive, SearchBudget, run_search


def small_result(median_target=4, shape_dims=None, profile_kw=None):
    space = make_space([ParamDomain.int_list("N", [2, 4, 8])])
    kw = {"intercept": 10.0, **(profile_kw or {})}
    profile = make_profile({"N": median_target}, **kw)
    shape = ShapeKey.from_dims(shape_dims or {"batch_size": 1, "seq_len": 64})
    session = SyntheticSession(profile, space)
    return run_search(space, shape, Exhaustive(), SearchBudget(max_evaluations=100), session)


def mutate_fingerprint(fp: EnvFingerprint, field: str) -> EnvFingerprint:
    doc = fp.to_json_dict()
    doc[field] = doc[field] + 1 if field == "protocol_version" else doc[field] + "-mutant"
    return EnvFingerprint.from_json_dict(doc)


class TestStoreLookup:
    def test_roundtrip(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        result = small_result()
        entry = CacheEntry.create(result)
        path = store.store(entry)
        assert path is not None and path.is_file()
        hit = store.lookup(result.fingerprint, result.shape)
        assert hit is not None
        assert hit.result.best.digest == result.best.digest
        assert hit.canonical() == entry.canonical()

    def test_fresh_store_object_sees_entry(self, tmp_path):
        result = small_result()
        CacheStore(tmp_path / "store").store(CacheEntry.create(result))
        other = CacheStore(tmp_path / "store")
        hit = other.lookup(result.fingerprint, result.shape)
        assert hit is not None and hit.result.best.digest == result.best.digest

    def test_empty_store_misses(self, tmp_path):
        store = CacheStore(tmp_path / "nowhere")
        result = small_result()
        assert store.lookup(result.fingerprint, result.shape) is None

    def test_changed_driver_version_misses(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        result = small_result()
        store.store(CacheEntry.create(result))
        mutated = mutate_fingerprint(result.fingerprint, "driver_version")
        assert store.lookup(mutated, result.shape) is None

    def test_every_fingerprint_field_isolates(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        result = small_result()
        store.store(CacheEntry.create(result))
        for field in EnvFingerprint.FIELDS:
            mutated = mutate_fingerprint(result.fingerprint, field)
            assert store.lookup(mutated, result.shape) is None, field

    def test_different_shape_misses(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        result = small_result()
        store.store(CacheEntry.create(result))
        other_shape = ShapeKey.from_dims({"batch_size": 1, "seq_len": 65})
        assert store.lookup(result.fingerprint, other_shape) is None

    def test_corrupt_entry_is_miss_with_warning(self, tmp_path, caplog):
        store = CacheStore(tmp_path / "store")
        result = small_result()
        path = store.store(CacheEntry.create(result))
        path.write_text("{ not json")
        with caplog.at_level("WARNING"):
            assert store.lookup(result.fingerprint, result.shape) is None
        assert any(str(path) in r.message for r in caplog.records)

    def test_stray_tmp_file_ignored(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        result = small_result()
        store.store(CacheEntry.create(result))
        (store.root / ".tmp-leftover.json").write_text("torn half-write")
        assert store.lookup(result.fingerprint, result.shape) is not None

    def test_lookup_survives_missing_index(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        result = small_result()
        store.store(CacheEntry.create(result))
        (store.root / "index.json").unlink()
        assert store.lookup(result.fingerprint, result.shape) is not None


class TestMonotoneOverwrite:
    def test_worse_result_does_not_clobber(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        good = small_result(median_target=4)  # best median 10.0
        store.store(CacheEntry.create(good))
        worse = small_result(median_target=4, profile_kw={"intercept": 20.0})
        assert worse.fingerprint != good.fingerprint  # different profile digest
        # force identical fingerprint/shape key by rebuilding the entry
        worse.fingerprint = good.fingerprint
        assert store.store(CacheEntry.create(worse)) is None
        hit = store.lookup(good.fingerprint, good.shape)
        assert hit.result.best_median_ms == good.best_median_ms

    def test_force_replaces(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        good = small_result(median_target=4)
        store.store(CacheEntry.create(good))
        worse = small_result(median_target=4, profile_kw={"intercept": 20.0})
        worse.fingerprint = good.fingerprint
        assert store.store(CacheEntry.create(worse), force=True) is not None
        hit = store.lookup(good.fingerprint, good.shape)
        assert hit.result.best_median_ms == worse.best_median_ms

    def test_better_replaces_without_force(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        slow = small_result(median_target=4, profile_kw={"intercept": 20.0})
        store.store(CacheEntry.create(slow))
        fast = small_result(median_target=4)
        fast.fingerprint = slow.fingerprint
        assert store.store(CacheEntry.create(fast)) is not None
        hit = store.lookup(slow.fingerprint, slow.shape)
        assert hit.result.best_median_ms == fast.best_median_ms


class TestBundles:
    def fill(self, store, n=3):
        results = []
        for i in range(n):
            result = small_result(shape_dims={"batch_size": 1, "seq_len": 64 + i})
            store.store(CacheEntry.create(result))
            results.append(result)
        return results

    def test_export_import_roundtrip(self, tmp_path):
        src = CacheStore(tmp_path / "src")
        results = self.fill(src, 3)
        bundle = tmp_path / "bundle.json"
        assert src.export_bundle(bundle) == 3
        dst = CacheStore(tmp_path / "dst")
        assert dst.import_bundle(bundle) == 3
        for result in results:
            hit = dst.lookup(result.fingerprint, result.shape)
            original = src.lookup(result.fingerprint, result.shape)
            assert hit is not None
            assert hit.canonical() == original.canonical()

    def test_import_preserves_canonical_serialization(self, tmp_path):
        src = CacheStore(tmp_path / "src")
        self.fill(src, 2)
        bundle = tmp_path / "bundle.json"
        src.export_bundle(bundle)
        dst = CacheStore(tmp_path / "dst")
        dst.import_bundle(bundle)
        src_canon = sorted(e.canonical() for e in src.entries())
        dst_canon = sorted(e.canonical() for e in dst.entries())
        assert src_canon == dst_canon

    def test_second_import_is_noop(self, tmp_path):
        src = CacheStore(tmp_path / "src")
        self.fill(src, 3)
        bundle = tmp_path / "bundle.json"
        src.export_bundle(bundle)
        dst = CacheStore(tmp_path / "dst")
        assert dst.import_bundle(bundle) == 3
        assert dst.import_bundle(bundle) == 0

    def test_unsupported_version_named(self, tmp_path):
        bundle = tmp_path / "bundle.json"
        bundle.write_text(json.dumps({"format_version": 99, "entries": []}))
        with pytest.raises(CacheVersionError) as exc:
            CacheStore(tmp_path / "dst").import_bundle(bundle)
        assert "99" in str(exc.value) and "1" in str(exc.value)

    def test_export_selected_keys(self, tmp_path):
        src = CacheStore(tmp_path / "src")
        results = self.fill(src, 3)
        bundle = tmp_path / "bundle.json"
        key = CacheKey(results[0].fingerprint.digest(), results[0].shape.digest)
        assert src.export_bundle(bundle, [key]) == 1


class TestEntryFormat:
    def test_file_schema_top_level(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        result = small_result()
        path = store.store(CacheEntry.create(result))
        doc = json.loads(path.read_text())
        assert set(doc) == {
            "format_version", "created_at", "framework_version",
            "fingerprint", "shape", "result",
        }
        assert doc["format_version"] == 1
        assert load_entry(path).result.best.digest == result.best.digest

    def test_invalidate(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        result = small_result()
        store.store(CacheEntry.create(result))
        key = CacheKey(result.fingerprint.digest(), result.shape.digest)
        assert store.invalidate(key)
        assert store.lookup(result.fingerprint, result.shape) is None

    def test_concurrent_writers_both_land(self, tmp_path):
        store = CacheStore(tmp_path / "store")
        results = [
            small_result(shape_dims={"batch_size": 1, "seq_len": 64 + i}) for i in range(4)
        ]
        threads = [
            threading.Thread(target=store.store, args=(CacheEntry.create(r),))
            for r in results
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(store.entries()) == 4
        for r in results:
            assert store.lookup(r.fingerprint, r.shape) is not None
