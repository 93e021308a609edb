import json
import re
from pathlib import Path

import numpy as np
import pytest

from nestedshape.errors import IngestError
from nestedshape.models.pnss import fit_pnss, pnss_transform
from nestedshape.utils.persistence import (
    configurations_frame,
    decode_array,
    encode_array,
    load_model,
    read_csv,
    scores_frame,
    write_csv,
    write_model,
)
from nestedshape.utils.utils import batched, make_rng, parallel_map


def test_batched():
    assert list(batched(range(7), 3)) == [[0, 1, 2], [3, 4, 5], [6]]
    assert list(batched([], 3)) == []
    with pytest.raises(ValueError):
        list(batched(range(3), 0))


def test_parallel_map_keeps_order():
    items = list(range(50))
    assert parallel_map(lambda x: x * x, items, threads=8) == [x * x for x in items]


def test_make_rng_streams():
    a = make_rng(3, 1).standard_normal(4)
    assert np.array_equal(a, make_rng(3, 1).standard_normal(4))
    assert not np.array_equal(a, make_rng(3, 2).standard_normal(4))


def test_array_encoding():
    a = np.arange(6.0).reshape(2, 3) / 7.0
    assert np.array_equal(decode_array(json.loads(json.dumps(encode_array(a)))), a)


def test_frames():
    frame = scores_frame(["a", "b"], [1, 2], np.array([[0.5, 1.5], [2.5, 3.5]]), prefix="PC")
    assert list(frame.columns) == ["run_id", "frame", "PC1", "PC2"]
    assert list(frame["PC2"]) == [2.5, 3.5]
    configs = [np.zeros((4, 2)), np.ones((4, 2))]
    long = configurations_frame(configs, kind=["x", "y"])
    assert list(long.columns) == ["kind", "landmark", "x1", "x2"]
    assert list(long["kind"]) == ["x"] * 4 + ["y"] * 4
    assert list(long["landmark"]) == [1, 2, 3, 4] * 2


def test_csv_round_trip(tmp_path, rng):
    values = rng.standard_normal(20) * 10.0 ** rng.integers(-8, 8, 20)
    write_csv(tmp_path / "v.csv", scores_frame(["r"] * 20, np.arange(1, 21), values))
    assert np.array_equal(read_csv(tmp_path / "v.csv")["PNSS1"].to_numpy(), values)


def test_saved_model_scores_like_the_original(tmp_path, make_configs, caplog):
    configs = make_configs(40)
    model = fit_pnss(configs, p=3)
    path = tmp_path / "model.json"
    write_model(path, gpa_result=model.gpa, pca=model.pca, pnss=model)
    with caplog.at_level("INFO", logger="nestedshape.utils.persistence"):
        loaded = load_model(path)
    assert loaded.p == 3
    assert "k=6, m=3, p=3" in caplog.text
    assert np.allclose(pnss_transform(loaded, configs[:10]), model.scores[:, :10], atol=1e-8)


def test_load_model_errors(tmp_path, make_configs):
    with pytest.raises(IngestError):
        load_model(tmp_path / "absent.json")
    (tmp_path / "broken.json").write_text("{not json")
    with pytest.raises(IngestError):
        load_model(tmp_path / "broken.json")
    model = fit_pnss(make_configs(20), p=2)
    write_model(tmp_path / "gpa.json", gpa_result=model.gpa)
    with pytest.raises(IngestError, match="lacks sections"):
        load_model(tmp_path / "gpa.json")


def test_every_requirement_is_imported():
    root = Path(__file__).resolve().parents[1]
    sources = "\n".join(
        path.read_text(encoding="utf-8")
        for folder in ("nestedshape", "scripts", "tests")
        for path in (root / folder).rglob("*.py")
    )
    for line in (root / "requirements.txt").read_text(encoding="utf-8").splitlines():
        name = re.split(r"[<>=\[ ]", line.strip(), maxsplit=1)[0]
        if name:
            assert re.search(rf"^\s*(import|from) {name}\b", sources, re.MULTILINE), name
