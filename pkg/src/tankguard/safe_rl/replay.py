"""Transitions, the replay buffer and the offline dataset file formats."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..maze import ACT_DIM, OBS_DIM

MASK_FIELDS = ("force", "tank", "flow")

DATASET_MAGIC = b"TGDS"
DATASET_VERSION = 1
JSONL_SCHEMA = "tankguard.dataset/1"
# s, a, a_task, r, s_next as float64; done and three mask flags as bytes
_RECORD = struct.Struct(f"<{OBS_DIM}d{ACT_DIM}d{ACT_DIM}dd{OBS_DIM}d4B")


@dataclass
class Transition:
    """One RL step. ``a`` is the executed physical action, ``a_task`` the one
    the task policy proposed (they differ when the recovery policy acted)."""

    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool
    mask: tuple = (False, False, False)
    a_task: np.ndarray | None = None

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        self.s_next = np.asarray(self.s_next, dtype=np.float64)
        self.a_task = self.a.copy() if self.a_task is None else np.asarray(self.a_task, dtype=np.float64)
        self.mask = tuple(bool(m) for m in self.mask)
        self.r = float(self.r)
        self.done = bool(self.done)

    @property
    def violated(self):
        return any(self.mask)

    def __eq__(self, other):
        return (isinstance(other, Transition)
                and all(np.array_equal(getattr(self, f), getattr(other, f)) for f in ("s", "a", "a_task", "s_next"))
                and self.r == other.r and self.done == other.done and self.mask == other.mask)


class ReplayBuffer:
    """Ring buffer of transitions with a side index of violating slots."""

    def __init__(self, capacity, obs_dim=OBS_DIM, act_dim=ACT_DIM):
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, obs_dim))
        self.a = np.zeros((self.capacity, act_dim))
        self.a_task = np.zeros((self.capacity, act_dim))
        self.r = np.zeros(self.capacity)
        self.s_next = np.zeros((self.capacity, obs_dim))
        self.done = np.zeros(self.capacity, dtype=bool)
        self.mask = np.zeros((self.capacity, len(MASK_FIELDS)), dtype=bool)
        self.size = 0
        self._next = 0
        self._viol: list[int] = []
        self._stale = 0

    def __len__(self):
        return self.size

    def add(self, tr: Transition):
        i = self._next
        if self.size == self.capacity and self.mask[i].any():
            self._stale += 1
        self.s[i], self.a[i], self.a_task[i] = tr.s, tr.a, tr.a_task
        self.r[i], self.s_next[i], self.done[i] = tr.r, tr.s_next, tr.done
        self.mask[i] = tr.mask
        if tr.violated:
            self._viol.append(i)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def extend(self, transitions):
        for tr in transitions:
            self.add(tr)

    @property
    def n_violations(self):
        self._compact()
        return len(self._viol)

    def _compact(self):
        if self._stale:
            seen = set()
            keep = []
            for i in reversed(self._viol):
                if i not in seen and self.mask[i].any():
                    keep.append(i)
                    seen.add(i)
            self._viol = keep[::-1]
            self._stale = 0

    def sample_idx(self, rng, n, violation_fraction=0.0):
        """Uniform slot indices; optionally a fraction drawn from violating slots."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        n_v = int(round(n * violation_fraction)) if violation_fraction > 0 else 0
        if n_v:
            self._compact()
            if not self._viol:
                n_v = 0
        idx = rng.integers(0, self.size, size=n - n_v)
        if n_v:
            vi = np.asarray(self._viol)[rng.integers(0, len(self._viol), size=n_v)]
            idx = np.concatenate([idx, vi])
        return idx

    def batch(self, idx):
        return {k: getattr(self, k)[idx] for k in ("s", "a", "a_task", "r", "s_next", "done", "mask")}

    def transition(self, i):
        return Transition(self.s[i].copy(), self.a[i].copy(), self.r[i], self.s_next[i].copy(), self.done[i],
                          tuple(self.mask[i]), self.a_task[i].copy())

    def transitions(self):
        return [self.transition(i) for i in range(self.size)]


# -- dataset files ---------------------------------------------------------

def write_dataset(path, transitions):
    """Binary dataset: header, then length-prefixed fixed-layout records."""
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC + struct.pack("<III", DATASET_VERSION, OBS_DIM, ACT_DIM))
        for tr in transitions:
            payload = _RECORD.pack(*tr.s, *tr.a, *tr.a_task, tr.r, *tr.s_next, tr.done, *tr.mask)
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)


def read_dataset(path):
    data = Path(path).read_bytes()
    head = len(DATASET_MAGIC) + 12
    if len(data) < head or data[:len(DATASET_MAGIC)] != DATASET_MAGIC:
        raise ValueError(f"{path}: not a transition dataset")
    version, obs_dim, act_dim = struct.unpack_from("<III", data, len(DATASET_MAGIC))
    if version != DATASET_VERSION or obs_dim != OBS_DIM or act_dim != ACT_DIM:
        raise ValueError(f"{path}: unsupported dataset (version {version}, dims {obs_dim}/{act_dim})")
    out = []
    off = head
    while off < len(data):
        if off + 4 > len(data):
            raise ValueError(f"{path}: truncated record header at byte {off}")
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        if n != _RECORD.size or off + n > len(data):
            raise ValueError(f"{path}: bad or truncated record at byte {off}")
        v = _RECORD.unpack_from(data, off)
        off += n
        o, a = OBS_DIM, ACT_DIM
        out.append(Transition(
            s=np.array(v[:o]), a=np.array(v[o:o + a]), a_task=np.array(v[o + a:o + 2 * a]),
            r=v[o + 2 * a], s_next=np.array(v[o + 2 * a + 1:2 * o + 2 * a + 1]),
            done=bool(v[-4]), mask=tuple(bool(x) for x in v[-3:]),
        ))
    return out


def write_dataset_jsonl(path, transitions):
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema": JSONL_SCHEMA, "obs_dim": OBS_DIM, "act_dim": ACT_DIM,
                             "mask_fields": list(MASK_FIELDS)}) + "\n")
        for tr in transitions:
            fh.write(json.dumps({
                "s": tr.s.tolist(), "a": tr.a.tolist(), "a_task": tr.a_task.tolist(), "r": tr.r,
                "s_next": tr.s_next.tolist(), "done": tr.done, "mask": list(tr.mask),
            }) + "\n")


def read_dataset_jsonl(path):
    with open(path) as fh:
        header = json.loads(fh.readline() or "{}")
        if header.get("schema") != JSONL_SCHEMA:
            raise ValueError(f"{path}: unsupported dataset schema {header.get('schema')!r}")
        return [Transition(np.array(d["s"]), np.array(d["a"]), d["r"], np.array(d["s_next"]), d["done"],
                           tuple(d["mask"]), np.array(d["a_task"]))
                for d in map(json.loads, filter(str.strip, fh))]


def load_dataset(path):
    """Read either dataset format, chosen by file extension."""
    return read_dataset_jsonl(path) if str(path).endswith(".jsonl") else read_dataset(path)
