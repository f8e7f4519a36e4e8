"""Instance files and CSV helpers.

Instance JSON schema::

    {"id": str, "n": int, "sigma": float, "seed": int | null,
     "J": [[a, b, value], ...],   # a < b, nonzero couplings only
     "h": [value, ...],
     "diagonal": [value, ...]}    # only for non-2-local problems

Floats are written with 17 significant digits so files round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import QuenchError
from .ising import IsingProblem


def fmt(x: float) -> str:
    """17-significant-digit decimal; integers-valued floats keep a decimal point."""
    x = float(x)
    if not np.isfinite(x):
        return "nan" if np.isnan(x) else ("inf" if x > 0 else "-inf")
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _json_list(values: Iterable[float]) -> str:
    return "[" + ", ".join(fmt(v) for v in values) + "]"


def instance_to_json(problem: IsingProblem) -> str:
    J = problem.couplings
    n = problem.n
    terms = [f"[{a}, {b}, {fmt(J[a, b])}]" for a in range(n) for b in range(a + 1, n) if J[a, b] != 0.0]
    parts = [
        f'"id": {json.dumps(problem.id)}',
        f'"n": {n}',
        f'"sigma": {fmt(problem.sigma)}',
        f'"seed": {"null" if problem.seed is None else int(problem.seed)}',
        '"J": [' + ", ".join(terms) + "]",
        f'"h": {_json_list(problem.fields)}',
    ]
    if problem.diagonal is not None:
        parts.append(f'"diagonal": {_json_list(problem.diagonal)}')
    return "{" + ", ".join(parts) + "}"


def instance_from_dict(d: dict) -> IsingProblem:
    try:
        n = int(d["n"])
        J = np.zeros((n, n))
        for a, b, v in d.get("J", []):
            J[int(a), int(b)] = J[int(b), int(a)] = float(v)
        h = np.array([float(v) for v in d.get("h", [0.0] * n)])
        diag = d.get("diagonal")
        return IsingProblem(
            n, J, h,
            id=str(d.get("id", "")),
            seed=None if d.get("seed") is None else int(d["seed"]),
            sigma=float(d.get("sigma", 0.0)),
            diagonal=None if diag is None else np.array(diag, dtype=float),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise QuenchError("invalid-instance", f"malformed instance record: {exc}") from exc


def write_instances(path: str | Path, problems: Sequence[IsingProblem]) -> None:
    """Write one instance as an object, several as a JSON array."""
    path = Path(path)
    if len(problems) == 1:
        text = instance_to_json(problems[0])
    else:
        text = "[\n" + ",\n".join(instance_to_json(p) for p in problems) + "\n]"
    path.write_text(text + "\n")


def read_instances(path: str | Path) -> list[IsingProblem]:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise QuenchError("io-error", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise QuenchError("invalid-instance", f"{path}: {exc}") from exc
    if isinstance(data, dict):
        data = [data]
    return [instance_from_dict(d) for d in data]


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with floats at 17 significant digits; other values written with str()."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
