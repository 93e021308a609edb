"""Model JSON and CSV artifacts.

Arrays are stored as {"shape": [...], "data": [...]} with data flattened in
C order; floats are written with repr precision so they read back exactly.
"""
import json
import logging
import os

import numpy as np
import pandas as pd

from nestedshape.errors import IngestError
from nestedshape.geometry.sphere import SpherePoint
from nestedshape.models.pns import PNSLevel, PNSModel
from nestedshape.models.pnss import PNSSModel
from nestedshape.shape.pca import ShapePCAModel
from nestedshape.shape.procrustes import PreShape

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FLOAT_FORMAT = "%.17g"


def encode_array(a):
    a = np.asarray(a)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def decode_array(obj, dtype=float):
    return np.asarray(obj["data"], dtype=dtype).reshape(obj["shape"])


def gpa_to_dict(gpa_result):
    return {
        "format_version": FORMAT_VERSION,
        "mean": encode_array(gpa_result.mean.matrix),
        "iterations": gpa_result.iterations,
        "objective": gpa_result.objective,
        "history": list(gpa_result.history),
        "distances": encode_array(gpa_result.distances),
        "non_unique_fits": gpa_result.non_unique_count,
    }


def pca_to_dict(pca):
    return {
        "format_version": FORMAT_VERSION,
        "mean": encode_array(pca.mean.matrix),
        "eigenvectors": encode_array(pca.eigenvectors),
        "eigenvalues": encode_array(pca.eigenvalues),
        "tangent_mean": encode_array(pca.tangent_mean),
        "total_variance": pca.total_variance,
    }


def pns_to_dict(pns):
    return {
        "format_version": FORMAT_VERSION,
        "levels": [
            {
                "axis": encode_array(level.axis.coords),
                "radius": level.radius,
                "rotation_to_pole": encode_array(level.rotation_to_pole),
                "scale_in": level.scale_in,
            }
            for level in pns.levels
        ],
        "final_mean_angle": pns.final_mean_angle,
        "final_scale": pns.final_scale,
        "d": pns.d,
        "n": pns.n,
    }


def model_to_dict(gpa_result=None, pca=None, pnss=None):
    """Model JSON document; sections that are not fitted yet are omitted."""
    doc = {"format_version": FORMAT_VERSION}
    if gpa_result is not None:
        doc["gpa"] = gpa_to_dict(gpa_result)
    if pca is not None:
        doc["pca"] = pca_to_dict(pca)
    if pnss is not None:
        doc["pns"] = pns_to_dict(pnss.pns)
        doc["pnss"] = {
            "format_version": FORMAT_VERSION,
            "p": pnss.p,
            "k": pnss.k,
            "m": pnss.m,
            "cut_point": pnss.cut_point,
        }
    return doc


def write_json(path, doc):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_model(path, gpa_result=None, pca=None, pnss=None):
    doc = model_to_dict(gpa_result, pca, pnss)
    write_json(path, doc)
    logger.debug("wrote model sections %s to %s", sorted(doc), path)


def load_model(path):
    """Scoring-capable PNSSModel from a model JSON document.

    Per-observation data (scores, embedded points, coordinates) is not
    stored, so the returned model supports transform and reconstruction only.
    """
    try:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot read model {path}: {exc}") from exc
    missing = [key for key in ("pca", "pns", "pnss") if key not in doc]
    if missing:
        raise IngestError(f"model {path} lacks sections {missing}")

    pca_doc, pns_doc, pnss_doc = doc["pca"], doc["pns"], doc["pnss"]
    eigenvalues = decode_array(pca_doc["eigenvalues"])
    empty = np.zeros((0, eigenvalues.size))
    pca = ShapePCAModel(
        mean=PreShape(decode_array(pca_doc["mean"])),
        eigenvectors=decode_array(pca_doc["eigenvectors"]),
        eigenvalues=eigenvalues,
        scores=empty,
        centered_scores=empty,
        tangent_norms=np.zeros(0),
        fit_distances=np.zeros(0),
        tangent_mean=decode_array(pca_doc["tangent_mean"]),
        total_variance=pca_doc["total_variance"],
    )
    levels = tuple(
        PNSLevel(
            axis=SpherePoint(decode_array(level["axis"])),
            radius=level["radius"],
            rotation_to_pole=decode_array(level["rotation_to_pole"]),
            scale_in=level["scale_in"],
            residuals=np.zeros(0),
        )
        for level in pns_doc["levels"]
    )
    pns = PNSModel(levels, pns_doc["final_mean_angle"], pns_doc["final_scale"], np.zeros((pns_doc["d"], 0)))
    p = pnss_doc["p"]
    logger.info("loaded model %s: k=%d, m=%d, p=%d", path, pca.mean.k, pca.mean.m, p)
    return PNSSModel(pca=pca, p=p, embedded=np.zeros((0, p + 1)), pns=pns)


def write_csv(path, frame):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_csv(path):
    return pd.read_csv(path, float_precision="round_trip")


def scores_frame(run_ids, frame_index, scores, prefix="PNSS"):
    """One row per observation: run_id, frame, prefix1..prefixd."""
    scores = np.atleast_2d(scores)
    frame = pd.DataFrame({"run_id": run_ids, "frame": np.asarray(frame_index, dtype=int)})
    for j, row in enumerate(scores, start=1):
        frame[f"{prefix}{j}"] = row
    return frame


def configurations_frame(configs, **columns):
    """Long table, one row per landmark: `columns` (one value per configuration), landmark, x1..xm."""
    points = np.stack([np.asarray(c, dtype=float) for c in configs])
    n, k, m = points.shape
    frame = pd.DataFrame({name: np.repeat(np.asarray(values), k) for name, values in columns.items()})
    frame["landmark"] = np.tile(np.arange(1, k + 1), n)
    for d in range(m):
        frame[f"x{d + 1}"] = points[:, :, d].ravel()
    return frame


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
