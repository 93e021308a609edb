"""Landmark trajectories on disk and in memory.

A trajectory file holds one run: a header line `k m frames`, then each
frame as k lines of m whitespace-separated decimals, frames separated by
blank lines.
"""
import glob
import logging
import os
import re
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from tqdm import tqdm

from nestedshape.errors import DimensionError, IngestError, RangeError
from nestedshape.shape.procrustes import Configuration

logger = logging.getLogger(__name__)

TRAJECTORY_SUFFIX = ".traj"
# plain or scientific decimal notation
DECIMAL = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


@dataclass(eq=False)
class Run:
    run_id: str
    frames: np.ndarray
    frame_index: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 3:
            raise DimensionError(f"run {self.run_id}: frames must have shape (frames, k, m)")
        if self.frame_index is None:
            self.frame_index = np.arange(1, self.frames.shape[0] + 1)
        self.frame_index = np.asarray(self.frame_index, dtype=int)

    def __len__(self):
        return self.frames.shape[0]

    def configurations(self):
        return [Configuration(f) for f in self.frames]


@dataclass(eq=False)
class TrajectoryDataset:
    runs: List[Run]

    def __post_init__(self):
        if not self.runs:
            raise DimensionError("a dataset needs at least one run")
        shape = self.runs[0].frames.shape[1:]
        for run in self.runs:
            if run.frames.shape[1:] != shape:
                raise DimensionError(
                    f"run {run.run_id} has {run.frames.shape[1:]} landmarks x dims, expected {shape}"
                )

    @property
    def k(self):
        return self.runs[0].frames.shape[1]

    @property
    def m(self):
        return self.runs[0].frames.shape[2]

    @property
    def frame_count(self):
        return min(len(run) for run in self.runs)

    @property
    def run_ids(self):
        return [run.run_id for run in self.runs]

    def stacked(self):
        """All frames as one (N, k, m) array plus matching run ids and frame indices."""
        frames = np.concatenate([run.frames for run in self.runs])
        run_ids = np.concatenate([[run.run_id] * len(run) for run in self.runs])
        frame_index = np.concatenate([run.frame_index for run in self.runs])
        return frames, run_ids, frame_index

    def labels(self):
        if any(run.labels is None for run in self.runs):
            return None
        return np.concatenate([run.labels for run in self.runs])


def _scan(path):
    """Yield ("frame", index, array) and ("problem", message) events for one file."""
    with open(path, encoding="utf-8") as handle:
        first = handle.readline()
        if not first.strip():
            yield "problem", f"{path}:1: missing header"
            return
        yield from _scan_frames(path, first.split(), handle)


def _scan_frames(path, header, lines):
    try:
        k, m, frames = (int(tok) for tok in header)
        if k <= m or m < 2 or frames < 1:
            raise ValueError
    except ValueError:
        yield "problem", f"{path}:1: header must be 'k m frames' with k > m >= 2 and frames >= 1"
        return

    lineno = 1
    count = 0
    block = []

    def close_block(end_line):
        if len(block) != k:
            return "problem", f"{path}:{end_line}: frame {count + 1} has {len(block)} rows, expected {k}"
        return "frame", count + 1, np.array([row for _, row in block])

    for lineno, line in enumerate(lines, start=2):
        tokens = line.split()
        if not tokens:
            if block:
                event = close_block(lineno - 1)
                yield event
                count += 1
                block = []
            continue
        if not all(DECIMAL.fullmatch(tok) for tok in tokens):
            yield "problem", f"{path}:{lineno}: could not parse {line.strip()!r} as decimals"
            row = [np.nan] * m
        else:
            row = [float(tok) for tok in tokens]
            if len(row) != m:
                yield "problem", f"{path}:{lineno}: expected {m} coordinates, found {len(row)}"
            elif not np.all(np.isfinite(row)):
                yield "problem", f"{path}:{lineno}: non-finite coordinate"
        block.append((lineno, row if len(row) == m else [np.nan] * m))
    if block:
        yield close_block(lineno)
        count += 1
    if count != frames:
        yield "problem", f"{path}:1: header announces {frames} frames, found {count}"


def iter_trajectory_frames(path):
    """Stream (frame index, k x m array) pairs from one file; raise on the first problem."""
    for event in _scan(path):
        if event[0] == "problem":
            raise IngestError(f"cannot read {path}", [event[1]])
        yield event[1], event[2]


def read_trajectory(path, run_id=None):
    frames, problems = [], []
    for event in _scan(path):
        if event[0] == "problem":
            problems.append(event[1])
        else:
            frames.append(event[2])
    if problems:
        return None, problems
    run_id = run_id or os.path.splitext(os.path.basename(path))[0]
    return Run(run_id, np.stack(frames)), []


def list_trajectories(path):
    if os.path.isfile(path):
        return [path]
    return sorted(
        f for f in glob.glob(os.path.join(path, "*" + TRAJECTORY_SUFFIX))
        if os.path.isfile(f) and not os.path.basename(f).startswith(".")
    )


def ingest(path, progress=False):
    """Read every trajectory file under `path` into a TrajectoryDataset.

    All problems across all files are collected into one IngestError.
    """
    if not os.path.exists(path):
        raise IngestError(f"no such file or directory: {path}")
    files = list_trajectories(path)
    if not files:
        raise IngestError(f"no trajectory files in {path}")
    runs, problems = [], []
    for file in tqdm(files, desc="ingest", disable=not progress):
        try:
            run, file_problems = read_trajectory(file)
        except (OSError, UnicodeDecodeError) as exc:
            problems.append(f"{file}:0: {exc}")
            continue
        problems.extend(file_problems)
        if run is not None:
            runs.append(run)
    if runs:
        shape = runs[0].frames.shape[1:]
        for run in runs[1:]:
            if run.frames.shape[1:] != shape:
                problems.append(f"{run.run_id}:1: k, m = {run.frames.shape[1:]} differ from {shape}")
    if problems:
        raise IngestError(f"{len(problems)} problem(s) reading {path}", problems)
    logger.info("ingested %d runs of %d landmarks in R^%d", len(runs), runs[0].frames.shape[1], runs[0].frames.shape[2])
    return TrajectoryDataset(runs)


def write_trajectory(path, frames):
    frames = np.asarray(frames, dtype=float)
    n, k, m = frames.shape
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"{k} {m} {n}\n")
        for i, frame in enumerate(frames):
            if i:
                handle.write("\n")
            for row in frame:
                handle.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def write_dataset(directory, dataset):
    os.makedirs(directory, exist_ok=True)
    for run in dataset.runs:
        write_trajectory(os.path.join(directory, f"{run.run_id}{TRAJECTORY_SUFFIX}"), run.frames)


def thin_indices(frame_count, count):
    """1-based indices 1 + (i-1)(F-1)/(count-1), rounded half up in exact integer arithmetic."""
    if not 2 <= count <= frame_count:
        raise RangeError(f"thinning count {count} outside 2..{frame_count}")
    i = np.arange(count, dtype=np.int64)
    return 1 + (2 * i * (frame_count - 1) + (count - 1)) // (2 * (count - 1))


def thin(dataset, count):
    idx = thin_indices(dataset.frame_count, count) - 1
    runs = [
        Run(
            run.run_id,
            run.frames[idx],
            run.frame_index[idx],
            None if run.labels is None else run.labels[idx],
        )
        for run in dataset.runs
    ]
    return TrajectoryDataset(runs)
