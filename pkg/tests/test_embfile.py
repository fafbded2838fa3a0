import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from anonbench.embfile import EmbeddingMatrix, read_embeddings, write_embeddings
from anonbench.errors import BadMagicError, DuplicateIdError, TruncatedPayloadError


def matrix(ids, rows):
    return EmbeddingMatrix(tuple(ids), np.asarray(rows, dtype=np.float32))


class TestEmbeddingMatrix:
    def test_basic_shape(self):
        m = matrix(["a", "b"], [[1, 2, 3], [4, 5, 6]])
        assert (m.n, m.dim) == (2, 3)
        assert m.row("b").tolist() == [4.0, 5.0, 6.0]

    def test_duplicate_ids_rejected(self):
        with pytest.raises(DuplicateIdError):
            matrix(["a", "a"], [[1.0], [2.0]])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            matrix(["a"], [[np.nan]])
        with pytest.raises(ValueError):
            matrix(["a"], [[np.inf]])

    def test_id_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            matrix(["a"], [[1.0], [2.0]])

    def test_data_is_read_only(self):
        m = matrix(["a"], [[1.0, 2.0]])
        with pytest.raises(ValueError):
            m.data[0, 0] = 9.0


class TestEmb1RoundTrip:
    def test_small_round_trip_bit_exact(self, tmp_path):
        m = matrix(["x", "y"], [[0.1, -2.5, 3e-8], [1e9, 0.0, -0.0]])
        path = tmp_path / "m.emb1"
        write_embeddings(m, path)
        back = read_embeddings(path)
        assert back.ids == m.ids
        # compare raw bit patterns, not float values
        assert np.array_equal(back.data.view(np.uint32), m.data.view(np.uint32))

    def test_write_is_deterministic(self, tmp_path):
        m = matrix(["a", "b"], [[1.5, 2.5], [3.5, 4.5]])
        write_embeddings(m, tmp_path / "1.emb1")
        write_embeddings(m, tmp_path / "2.emb1")
        assert (tmp_path / "1.emb1").read_bytes() == (tmp_path / "2.emb1").read_bytes()

    @settings(max_examples=60, deadline=None,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        n=st.integers(1, 12),
        d=st.integers(1, 24),
        seed=st.integers(0, 2**32 - 1),
        ids_text=st.lists(st.text(min_size=0, max_size=12), min_size=12, max_size=12, unique=True),
    )
    def test_round_trip_property(self, tmp_path, n, d, seed, ids_text):
        rng = np.random.default_rng(seed)
        data = rng.standard_normal((n, d)).astype(np.float32)
        m = EmbeddingMatrix(tuple(ids_text[:n]), data)
        path = tmp_path / f"p_{seed}.emb1"
        write_embeddings(m, path)
        back = read_embeddings(path)
        assert back.ids == m.ids
        assert np.array_equal(back.data.view(np.uint32), m.data.view(np.uint32))


class TestEmb1Errors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.emb1"
        path.write_bytes(b"EMB2" + struct.pack("<II", 1, 1) + b"\x00\x00" + b"\x00" * 4)
        with pytest.raises(BadMagicError):
            read_embeddings(path)

    def test_declared_rows_exceed_payload(self, tmp_path):
        m = matrix(["a", "b", "c", "d"], np.ones((4, 3)))
        path = tmp_path / "t.emb1"
        write_embeddings(m, path)
        blob = bytearray(path.read_bytes())
        struct.pack_into("<I", blob, 4, 5)  # claim N=5, payload holds 4 rows
        path.write_bytes(bytes(blob))
        with pytest.raises(TruncatedPayloadError):
            read_embeddings(path)

    def test_truncated_payload(self, tmp_path):
        m = matrix(["a", "b"], np.ones((2, 4)))
        path = tmp_path / "t.emb1"
        write_embeddings(m, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(TruncatedPayloadError):
            read_embeddings(path)

    def test_non_finite_payload_rejected(self, tmp_path):
        m = matrix(["a"], [[1.0, 2.0]])
        path = tmp_path / "t.emb1"
        write_embeddings(m, path)
        blob = bytearray(path.read_bytes())
        blob[-4:] = struct.pack("<f", np.inf)
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError):
            read_embeddings(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "t.emb1"
        path.write_bytes(b"EMB1\x01")
        with pytest.raises(TruncatedPayloadError):
            read_embeddings(path)

    def test_empty_file_is_bad_magic(self, tmp_path):
        path = tmp_path / "t.emb1"
        path.write_bytes(b"")
        with pytest.raises(BadMagicError):
            read_embeddings(path)
