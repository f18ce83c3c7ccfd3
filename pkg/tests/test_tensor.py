import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from incepkit.errors import ShapeError
from incepkit.tensor import MAGIC, check_tensor, decode_tbin, encode_tbin, read_tbin, write_tbin


def _shapes():
    return st.sampled_from([1, 2, 4]).flatmap(lambda r: hnp.array_shapes(min_dims=r, max_dims=r, min_side=1, max_side=5))


@settings(max_examples=60, deadline=None)
@given(data=st.data(), dtype=st.sampled_from([np.float32, np.float64]))
def test_tbin_roundtrip(data, dtype):
    shape = data.draw(_shapes())
    x = data.draw(hnp.arrays(dtype, shape, elements=st.floats(-1e6, 1e6, width=32)))
    y = decode_tbin(encode_tbin(x))
    assert y.dtype == dtype and y.shape == x.shape
    np.testing.assert_array_equal(x, y)


def test_tbin_header_layout():
    buf = encode_tbin(np.zeros((2, 3), np.float64))
    assert buf[:4] == MAGIC
    assert struct.unpack_from("<IBB2Q", buf, 4) == (1, 2, 2, 2, 3)
    assert len(buf) == 4 + 4 + 2 + 16 + 6 * 8


def test_tbin_file_roundtrip(tmp_path):
    x = np.arange(24, dtype=np.float32).reshape(1, 2, 3, 4)
    write_tbin(tmp_path / "x.tbin", x)
    np.testing.assert_array_equal(read_tbin(tmp_path / "x.tbin"), x)


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + struct.pack("<I", 2) + b[8:],
    lambda b: b[:8] + bytes([9]) + b[9:],
    lambda b: b[:9] + bytes([3]) + b[10:],
    lambda b: b[:-1],
])
def test_tbin_rejects_corruption(mutate):
    buf = encode_tbin(np.ones((2, 2), np.float32))
    with pytest.raises(ValueError):
        decode_tbin(mutate(buf))


@pytest.mark.parametrize("x", [np.zeros((2, 2, 2)), np.zeros((0, 3)), np.zeros(3, dtype=np.int32), np.float64(1.0)])
def test_check_tensor_invariants(x):
    with pytest.raises(ShapeError):
        check_tensor(x)
