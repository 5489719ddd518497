import numpy as np
import pytest

from learnedlsm.core import IndexKind, IndexParams
from learnedlsm.errors import CorruptIndexError
from learnedlsm.indexes import build_index, deserialize_index, serialize_index

ENTRY_SIZE = 116
ALL_KINDS = list(IndexKind)


def build(kind, keys, eps=16):
    params = IndexParams(epsilon=eps, leaf_count=max(keys.size // 16, 1),
                         fp_block_bytes=2 * eps * ENTRY_SIZE)
    return build_index(kind, params, keys, entry_size=ENTRY_SIZE)


@pytest.fixture(scope="module")
def keys_1k():
    rng = np.random.default_rng(17)
    return np.unique(rng.integers(0, 2**63, size=1100, dtype=np.uint64))[:1000]


@pytest.fixture(scope="module")
def probes_10k():
    rng = np.random.default_rng(18)
    return np.unique(rng.integers(0, 2**63, size=10_500, dtype=np.uint64))[:10_000]


class TestRoundTrip:
    @pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
    def test_serialize_is_fixed_point(self, kind, keys_1k):
        index = build(kind, keys_1k)
        blob = serialize_index(index)
        again = deserialize_index(blob)
        assert serialize_index(again) == blob

    @pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
    def test_predictions_survive_round_trip(self, kind, keys_1k, probes_10k):
        index = build(kind, keys_1k)
        again = deserialize_index(serialize_index(index))
        for arr in (keys_1k, probes_10k):
            lo1, hi1 = index.predict_many(arr)
            lo2, hi2 = again.predict_many(arr)
            assert np.array_equal(lo1, lo2) and np.array_equal(hi1, hi2)
        assert again.memory_bytes() == index.memory_bytes()
        assert again.position_boundary() == index.position_boundary()

    def test_empty_index_round_trip(self):
        index = build_index(IndexKind.PLR, IndexParams(), np.array([], dtype=np.uint64))
        again = deserialize_index(serialize_index(index))
        assert again.n == 0

    @pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
    def test_deterministic_bytes(self, kind, keys_1k):
        assert serialize_index(build(kind, keys_1k)) == serialize_index(build(kind, keys_1k))


class TestCorruption:
    def test_empty_bytes(self):
        with pytest.raises(CorruptIndexError):
            deserialize_index(b"")

    def test_bad_magic(self, keys_1k):
        blob = bytearray(serialize_index(build(IndexKind.PGM, keys_1k)))
        blob[0] = ord("X")
        with pytest.raises(CorruptIndexError):
            deserialize_index(bytes(blob))

    def test_bad_version(self, keys_1k):
        blob = bytearray(serialize_index(build(IndexKind.PGM, keys_1k)))
        blob[4] = 99
        with pytest.raises(CorruptIndexError):
            deserialize_index(bytes(blob))

    def test_truncation(self, keys_1k):
        blob = serialize_index(build(IndexKind.RADIX_SPLINE, keys_1k))
        with pytest.raises(CorruptIndexError):
            deserialize_index(blob[:len(blob) // 2])

    def test_payload_bit_flip_caught_by_crc(self, keys_1k):
        blob = bytearray(serialize_index(build(IndexKind.RMI, keys_1k)))
        blob[70] ^= 0x40
        with pytest.raises(CorruptIndexError):
            deserialize_index(bytes(blob))

    def test_unknown_kind_code(self, keys_1k):
        blob = bytearray(serialize_index(build(IndexKind.PLR, keys_1k)))
        blob[6] = 42
        with pytest.raises(CorruptIndexError):
            deserialize_index(bytes(blob))
