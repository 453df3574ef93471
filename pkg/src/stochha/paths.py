"""Simulated paths and their delimited-text export."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

from .core import EdgeKind, State


@dataclass(frozen=True)
class Step:
    """One time step followed by one jump.

    ``start`` is the state before the delay, ``post`` the state at the jump
    instant and ``target`` the successor.  ``sampled`` is the raw delay draw,
    which exceeds ``delay`` only when a forced edge absorbed it.  ``race``
    holds the race vector before the step for decomposed runs.
    """

    index: int
    time: float
    delay: float
    sampled: float
    start: State
    post: State
    edge: str
    kind: EdgeKind
    target: State
    race: tuple[float, ...] | None = None
    race_after: tuple[float, ...] | None = None

    @property
    def jump_time(self) -> float:
        return self.time + self.delay


@dataclass(frozen=True)
class Path:
    trajectory: int
    init: State
    steps: tuple[Step, ...]
    stop: str

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def duration(self) -> float:
        return self.steps[-1].jump_time if self.steps else 0.0

    @property
    def final(self) -> State:
        return self.steps[-1].target if self.steps else self.init

    def edges(self) -> tuple[str, ...]:
        return tuple(s.edge for s in self.steps)


def _num(x: float) -> str:
    return repr(float(x))


def path_header(variables: Sequence[str], race_k: int = 0) -> list[str]:
    cols = ["trajectory", "step", "timestamp", "location", *variables, "edge", "kind"]
    cols.extend(f"R{i + 1}" for i in range(race_k))
    return cols


def path_rows(path: Path, race_k: int = 0) -> Iterable[list[str]]:
    """One row per jump: position and valuation at the jump instant."""
    for s in path.steps:
        row = [str(path.trajectory), str(s.index), _num(s.jump_time), s.post.location,
               *(_num(x) for x in s.post.valuation), s.edge, s.kind.value]
        if race_k:
            race = s.race or ()
            row.extend(_num(x) for x in race)
        yield row


def write_paths_csv(paths: Iterable[Path], variables: Sequence[str], out: TextIO,
                    race_k: int = 0, comments: Sequence[str] = ()) -> None:
    for line in comments:
        out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(path_header(variables, race_k))
    for p in paths:
        w.writerows(path_rows(p, race_k))


def paths_to_csv(paths: Iterable[Path], variables: Sequence[str], race_k: int = 0,
                 comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    write_paths_csv(paths, variables, buf, race_k, comments)
    return buf.getvalue()
