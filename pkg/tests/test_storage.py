import io
import logging
import math
import os

import numpy as np
import pytest

from errors import ContractError
from storage import ArtifactStore, decode_pgm, encode_pgm, render_csv, render_json, to_jsonable


def test_csv_uses_six_significant_digits():
    text = render_csv(("n", "weight"), [(0, 1 / 3), (1, None)])
    assert text == "n,weight\n0,0.333333\n1,\n"


def test_json_rounding_and_nan():
    assert to_jsonable({"a": 2 / 3, "b": math.nan, 3: np.float64(1e-9)}) == {"a": 0.666667, "b": None, "3": 1e-9}
    assert render_json({"x": [1, 2]}).endswith("\n")


def test_store_writes_atomically(tmp_path):
    store = ArtifactStore(str(tmp_path / "out"))
    path = store.write_csv("table.csv", ("a",), [(1,)])
    assert open(path).read() == "a\n1\n"
    assert os.listdir(tmp_path / "out") == ["table.csv"]
    assert store.written == [path]


def test_store_streams_text_without_directory():
    buffer = io.StringIO()
    store = ArtifactStore(stdout=buffer)
    assert store.to_stdout
    assert store.write_json("data.json", {"k": 1}) is None
    assert buffer.getvalue() == '{\n  "k": 1\n}\n'


def test_binary_artifacts_need_a_directory():
    with pytest.raises(ContractError, match="--out"):
        ArtifactStore(stdout=io.StringIO()).write_pgm("image.pgm", np.zeros((2, 2)))


@pytest.mark.parametrize("fmt", ["P2", "P5"])
def test_pgm_formats(tmp_path, fmt):
    raster = np.array([[0, 1, 2], [300, 40000, 65535]])
    store = ArtifactStore(str(tmp_path))
    path = store.write_pgm("image.pgm", raster, fmt)
    with open(path, "rb") as f:
        assert f.read(2) == fmt.encode()
    assert np.array_equal(ArtifactStore.read_pgm(path), raster)


def test_pgm_header_comments():
    data = b"P2\n# synthetic\n2 1\n65535\n7 8\n"
    assert decode_pgm(data).tolist() == [[7, 8]]


def test_pgm_clipping_warns(caplog):
    with caplog.at_level(logging.WARNING):
        data = encode_pgm(np.array([[70000]]))
    assert "clipped" in caplog.text
    assert decode_pgm(data).tolist() == [[65535]]


def test_truncated_pgm():
    with pytest.raises(ContractError, match="expected"):
        decode_pgm(b"P5\n2 2\n65535\n\x00\x01")
