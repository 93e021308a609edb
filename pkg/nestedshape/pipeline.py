"""End-to-end analysis: thin, align, reduce, cluster and summarise transitions.

Each stage writes its artifacts as soon as it finishes, so a failure leaves
everything produced by earlier stages on disk.
"""
import logging
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List

import numpy as np
import pandas as pd
from tqdm import tqdm

from nestedshape.analysis.cluster import euclidean_distance_matrix, great_circle_distance_matrix, ward_linkage
from nestedshape.analysis.markov import (
    StateSequence,
    equilibrium,
    estimate_transition_matrix,
    final_location_probabilities,
    format_equilibrium_table,
    format_transition_table,
    hellinger_distance,
    pool_transition_matrix,
    temporal_cluster,
)
from nestedshape.data.trajectory import iter_trajectory_frames, list_trajectories, thin
from nestedshape.errors import IngestError, NestedShapeError, RangeError, StageError
from nestedshape.models.pns import pns_decompose, variance_by_component
from nestedshape.models.pnss import (
    PNSSModel,
    choose_components,
    check_components,
    embed_on_sphere,
    fit_pnss,
    fit_pnss_exact,
    pnss_mean_shape,
    pnss_transform,
    principal_arc,
)
from nestedshape.shape.pca import cumulative_variance, fit_shape_pca, variance_percentages
from nestedshape.shape.procrustes import from_preshape, gpa, riemannian_shape_distance
from nestedshape.utils.persistence import (
    FLOAT_FORMAT,
    configurations_frame,
    ensure_dir,
    scores_frame,
    write_csv,
    write_model,
)
from nestedshape.utils.utils import batched, parallel_map

logger = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    output_dir: str
    completed: List[str] = field(default_factory=list)
    artifacts: Dict[str, str] = field(default_factory=dict)
    state: Dict[str, Any] = field(default_factory=dict)


class _Run:
    def __init__(self, dataset, config, progress):
        self.dataset = dataset
        self.config = config
        self.progress = progress
        self.result = PipelineResult(output_dir=ensure_dir(config.output_dir))
        self.state = self.result.state

    def path(self, name):
        path = os.path.join(self.result.output_dir, name)
        self.result.artifacts[name] = path
        return path

    def csv(self, name, frame):
        write_csv(self.path(name), frame)

    def text(self, name, body):
        with open(self.path(name), "w", encoding="utf-8") as handle:
            handle.write(body.rstrip("\n") + "\n")


def pairwise_run_distances(dataset, positions=None, times=2, threads=1):
    """Riemannian shape distances between every pair of runs at selected time positions.

    `positions` are 1-based frame positions within each run; by default the
    first `times` and last `times` positions.
    """
    T = dataset.frame_count
    if positions is None:
        positions = sorted(set(list(range(1, min(times, T) + 1)) + list(range(max(T - times + 1, 1), T + 1))))
    rows = []
    for position in positions:
        if not 1 <= position <= T:
            raise RangeError(f"time position {position} outside 1..{T}")
        pairs = list(combinations(range(len(dataset.runs)), 2))
        distances = parallel_map(
            lambda ab: riemannian_shape_distance(
                dataset.runs[ab[0]].frames[position - 1], dataset.runs[ab[1]].frames[position - 1]
            ),
            pairs,
            threads=threads,
        )
        for (a, b), rho in zip(pairs, distances):
            rows.append({
                "position": position,
                "frame": int(dataset.runs[a].frame_index[position - 1]),
                "run_a": dataset.runs[a].run_id,
                "run_b": dataset.runs[b].run_id,
                "distance": rho,
            })
    return pd.DataFrame(rows, columns=["position", "frame", "run_a", "run_b", "distance"])


def _stage_thin(run):
    cfg = run.config
    data = run.dataset if cfg.thin_count is None else thin(run.dataset, cfg.thin_count)
    frames, run_ids, frame_index = data.stacked()
    positions = np.concatenate([np.arange(1, len(r) + 1) for r in data.runs])
    run.state.update(data=data, frames=frames, run_ids=run_ids, frame_index=frame_index, positions=positions)
    run.csv("thinned_frames.csv", pd.DataFrame({"run_id": run_ids, "position": positions, "frame": frame_index}))


def _stage_distances(run):
    frame = pairwise_run_distances(run.state["data"], times=run.config.distance_times, threads=run.config.threads)
    run.csv("run_distances.csv", frame)


def _stage_gpa(run):
    cfg = run.config
    result = gpa(list(run.state["frames"]), tol=cfg.gpa.tol, max_iter=cfg.gpa.max_iter,
                 threads=cfg.threads, progress=run.progress)
    run.state["gpa"] = result
    run.csv("gpa_history.csv", pd.DataFrame({"iteration": np.arange(1, len(result.history) + 1),
                                             "objective": result.history}))
    write_model(run.path("model.json"), gpa_result=result)


def _stage_pca(run):
    pca = fit_shape_pca(run.state["gpa"], threads=run.config.threads)
    run.state["pca"] = pca
    run.csv("pca_variance.csv", pd.DataFrame({
        "component": np.arange(1, pca.n_components + 1),
        "eigenvalue": pca.eigenvalues,
        "percent": variance_percentages(pca),
        "cumulative": cumulative_variance(pca),
    }))
    run.csv("pc_scores.csv", scores_frame(run.state["run_ids"], run.state["frame_index"],
                                          pca.centered_scores.T, prefix="PC"))
    write_model(run.path("model.json"), gpa_result=run.state["gpa"], pca=pca)


def _stage_pnss(run):
    cfg = run.config
    gpa_result, pca = run.state["gpa"], run.state["pca"]
    if cfg.pnss.p is None:
        p = choose_components(pca, cfg.pnss.variance_threshold)
    else:
        p = cfg.pnss.p
        check_components(p, pca.mean.k, pca.mean.m)
    embedded = embed_on_sphere(gpa_result, pca, p)
    model = PNSSModel(pca=pca, p=p, embedded=embedded, pns=pns_decompose(embedded, seed=cfg.seed), gpa=gpa_result)
    run.state["pnss"] = model
    percent = variance_by_component(model.pns)
    run.csv("scores.csv", scores_frame(run.state["run_ids"], run.state["frame_index"], model.scores))
    run.csv("pnss_variance.csv", pd.DataFrame({
        "component": np.arange(1, model.pns.d + 1),
        "percent": percent,
        "cumulative": np.cumsum(percent),
    }))
    write_model(run.path("model.json"), gpa_result=gpa_result, pca=pca, pnss=model)
    logger.info("PNSS1-2 explain %.1f%%, PC1-2 explain %.1f%%",
                percent[:2].sum(), variance_percentages(pca)[:2].sum())

    if cfg.pnss.exact_check and pca.mean.k <= 8:
        exact = fit_pnss_exact(gpa_result, seed=cfg.seed)
        exact_percent = variance_by_component(exact.pns)
        run.csv("exact_pnss_variance.csv", pd.DataFrame({
            "component": np.arange(1, exact.pns.d + 1),
            "percent": exact_percent,
            "cumulative": np.cumsum(exact_percent),
        }))


def _merge_table(dendrogram):
    return pd.DataFrame(dendrogram.linkage, columns=["left", "right", "height", "size"]).astype(
        {"left": int, "right": int, "size": int}
    )


def _stage_cluster(run):
    cfg = run.config
    model = run.state["pnss"]
    sphere = ward_linkage(great_circle_distance_matrix(model.embedded), cfg.cluster.linkage)
    q = min(cfg.cluster.pc_components, model.pca.n_components)
    pc = ward_linkage(euclidean_distance_matrix(model.pca.centered_scores[:, :q]), cfg.cluster.linkage)
    labels = sphere.cut(cfg.cluster.k_states)
    run.state["labels"] = labels
    run.csv("clusters.csv", pd.DataFrame({
        "run_id": run.state["run_ids"],
        "frame": run.state["frame_index"],
        "sphere_cluster": labels,
        "pc_cluster": pc.cut(cfg.cluster.k_states),
    }))
    run.csv("dendrogram_sphere.csv", _merge_table(sphere))
    run.csv("dendrogram_pc.csv", _merge_table(pc))


def _stage_refit(run):
    cfg = run.config
    model = run.state["pnss"]
    labels = run.state["labels"]
    frames = run.state["frames"]
    min_size = cfg.cluster.min_refit_size or model.p + 2
    summary, means, arcs = [], [], []
    for cluster in range(1, cfg.cluster.k_states + 1):
        members = np.flatnonzero(labels == cluster)
        if members.size < min_size:
            logger.warning("cluster %d has %d members, too few to refit (need %d)", cluster, members.size, min_size)
            continue
        try:
            sub = fit_pnss(list(frames[members]), p=model.p, tol=cfg.gpa.tol, max_iter=cfg.gpa.max_iter,
                           threads=cfg.threads, seed=cfg.seed)
        except NestedShapeError as exc:
            logger.warning("cluster %d refit failed: %s", cluster, exc)
            continue
        pnss_mean = pnss_mean_shape(sub)
        procrustes_mean = from_preshape(sub.mean)
        summary.append({
            "cluster": cluster,
            "size": members.size,
            "cut_point": sub.cut_point,
            "mean_distance": riemannian_shape_distance(pnss_mean, procrustes_mean),
        })
        means.append(configurations_frame([pnss_mean, procrustes_mean], cluster=[cluster] * 2,
                                          kind=["pnss", "procrustes"]))
        try:
            arc = principal_arc(sub, 1, cfg.arcs.c, cfg.arcs.samples, threads=cfg.threads)
        except RangeError as exc:
            logger.warning("cluster %d PNSS1 arc skipped: %s", cluster, exc)
            continue
        n = len(arc.configurations)
        arcs.append(configurations_frame(arc.configurations, cluster=[cluster] * n,
                                         sample=np.arange(1, n + 1), offset=arc.offsets))
    run.csv("cluster_refits.csv", pd.DataFrame(summary, columns=["cluster", "size", "cut_point", "mean_distance"]))
    if means:
        run.csv("cluster_means.csv", pd.concat(means, ignore_index=True))
    if arcs:
        run.csv("cluster_arcs.csv", pd.concat(arcs, ignore_index=True))


def _stage_arcs(run):
    cfg = run.config
    model = run.state["pnss"]
    pnss_mean = pnss_mean_shape(model)
    procrustes_mean = from_preshape(model.mean)
    run.csv("mean_shapes.csv", configurations_frame([pnss_mean, procrustes_mean], kind=["pnss", "procrustes"]))
    logger.info("PNSS mean is %.4g from the Procrustes mean", riemannian_shape_distance(pnss_mean, procrustes_mean))

    summary, frames = [], []
    for j in range(1, min(cfg.arcs.components, model.pns.d) + 1):
        try:
            arc = principal_arc(model, j, cfg.arcs.c, cfg.arcs.samples, threads=cfg.threads)
        except RangeError as exc:
            logger.warning("PNSS%d arc skipped: %s", j, exc)
            continue
        n = len(arc.configurations)
        summary.append({"component": j, "s": arc.s_j, "c": arc.c, "cut_point": model.cut_point})
        frames.append(configurations_frame(arc.configurations, component=[j] * n,
                                           sample=np.arange(1, n + 1), offset=arc.offsets))
    run.csv("arc_summary.csv", pd.DataFrame(summary, columns=["component", "s", "c", "cut_point"]))
    if frames:
        run.csv("arcs.csv", pd.concat(frames, ignore_index=True))


def _stage_transitions(run):
    cfg = run.config
    K = cfg.cluster.k_states
    labels = run.state["labels"]
    run_ids = run.state["run_ids"]
    seqs = [StateSequence(r.run_id, labels[run_ids == r.run_id], K) for r in run.state["data"].runs]
    mats = [estimate_transition_matrix(s) for s in seqs]
    run.state.update(sequences=seqs, matrices=mats)

    rows = []
    for seq, t in zip(seqs, mats):
        for a in range(K):
            for b in range(K):
                rows.append({"run_id": seq.run_id, "from": a + 1, "to": b + 1, "count": int(t.counts[a, b]),
                             "prob": t.probs[a, b], "supported": bool(t.row_support[a])})
    run.csv("transition_matrices.csv", pd.DataFrame(rows))

    overall = {mode: pool_transition_matrix(seqs, mode) for mode in ("pooled", "averaged")}
    gap = hellinger_distance(overall["pooled"], overall["averaged"])
    logger.info("pooled vs averaged overall transition matrix: Hellinger distance %.4g", gap)
    run.state["overall"] = overall[cfg.markov.mode]
    run.csv("overall_transition.csv", pd.DataFrame([
        {"mode": mode, "from": a + 1, "to": b + 1, "prob": t.probs[a, b]}
        for mode, t in overall.items() for a in range(K) for b in range(K)
    ]))
    run.text("overall_transition.txt",
             f"Overall transition matrix ({cfg.markov.mode})\n"
             f"{format_transition_table(overall[cfg.markov.mode])}\n"
             f"Hellinger distance pooled vs averaged: {gap:.4f}")
    run.csv("visit_history.csv", pd.DataFrame({
        "run_id": run_ids, "position": run.state["positions"], "frame": run.state["frame_index"], "state": labels,
    }))


def _stage_temporal(run):
    cfg = run.config
    K = cfg.cluster.k_states
    seqs, mats = run.state["sequences"], run.state["matrices"]
    tc = temporal_cluster(mats, cfg.markov.k_tc, cfg.cluster.linkage, cfg.markov.mode)
    rows = {"Overall": equilibrium(run.state["overall"])}
    rows.update({f"TC{i}": e for i, e in enumerate(tc.equilibria, start=1)})
    names = [f"Cluster{i}" for i in range(1, K + 1)]
    table = pd.DataFrame(
        [r.probs if r is not None else np.full(K, np.nan) for r in rows.values()], columns=names
    )
    table.insert(0, "row", list(rows))
    run.csv("equilibrium.csv", table)
    run.text("equilibrium.txt", format_equilibrium_table(rows))
    run.csv("temporal_clusters.csv", pd.DataFrame({"run_id": [s.run_id for s in seqs], "tc": tc.labels}))
    final = final_location_probabilities(seqs, tc.labels)
    final_table = pd.DataFrame(final, columns=names)
    final_table.insert(0, "tc", np.arange(1, final.shape[0] + 1))
    run.csv("final_location.csv", final_table)


STAGES = (
    ("thin", _stage_thin),
    ("distances", _stage_distances),
    ("gpa", _stage_gpa),
    ("pca", _stage_pca),
    ("pnss", _stage_pnss),
    ("cluster", _stage_cluster),
    ("refit", _stage_refit),
    ("arcs", _stage_arcs),
    ("transitions", _stage_transitions),
    ("temporal", _stage_temporal),
)


def run_pipeline(dataset, config, progress=False):
    """Run every stage in order, stopping after `config.stop_after` if set."""
    run = _Run(dataset, config, progress)
    for name, stage in STAGES:
        logger.info("stage %s", name)
        try:
            stage(run)
        except Exception as exc:
            raise StageError(name, exc) from exc
        run.result.completed.append(name)
        if config.stop_after == name:
            break
    return run.result


def score_trajectories(model, path, out_path, threads=1, batch_size=256, progress=False):
    """Stream every frame under `path` through a fitted model into a scores CSV.

    Batches are scored on a thread pool with at most 2 * threads in flight and
    written in submission order. Returns the number of frames scored.
    """
    files = list_trajectories(path)
    if not files:
        raise IngestError(f"no trajectory files in {path}")
    window = max(1, 2 * threads)
    pending = deque()
    written = 0
    header = True

    with open(out_path, "w", encoding="utf-8") as handle, ThreadPoolExecutor(max_workers=threads) as pool:

        def drain(limit):
            nonlocal header, written
            while len(pending) > limit:
                run_id, index, future = pending.popleft()
                frame = scores_frame([run_id] * len(index), index, future.result())
                frame.to_csv(handle, index=False, header=header, float_format=FLOAT_FORMAT, lineterminator="\n")
                header = False
                written += len(index)

        for file in tqdm(files, desc="score", disable=not progress):
            run_id = os.path.splitext(os.path.basename(file))[0]
            for batch in batched(iter_trajectory_frames(file), batch_size):
                index = [i for i, _ in batch]
                configs = [frame for _, frame in batch]
                pending.append((run_id, index, pool.submit(pnss_transform, model, configs)))
                drain(window)
        drain(0)
    logger.info("scored %d frames from %d files", written, len(files))
    return written
