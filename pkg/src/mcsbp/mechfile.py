"""Mechanism files: JSON with line-anchored validation errors.

Layout::

    {"d": 2,
     "columns": [{"drift": [...], "gaussian": 2.0,
                  "stable": {"alpha": 1.5, "scale": 1.0} | null,
                  "jumps": [{"rate": 1.0, "vector": [...]}]}, ...]}
"""
import json
import json.decoder
import json.scanner
from pathlib import Path

from .mechanism import (BranchingMechanism, JumpAtom, LevyColumn, MechanismError,
                        StableComponent)


class _LocDict(dict):
    line = None


class _LocList(list):
    line = None


class _LocatingDecoder(json.JSONDecoder):
    """Decoder whose objects and arrays remember the line they start on."""

    def __init__(self):
        super().__init__()
        self.parse_object = self._object
        self.parse_array = self._array
        self.scan_once = json.scanner.py_make_scanner(self)

    @staticmethod
    def _line(s, end):
        return s.count("\n", 0, end) + 1

    def _object(self, s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo=None):
        s, end = s_and_end
        obj, new_end = json.decoder.JSONObject(s_and_end, strict, scan_once, object_hook,
                                               object_pairs_hook, memo)
        out = _LocDict(obj)
        out.line = self._line(s, end - 1)
        return out, new_end

    def _array(self, s_and_end, scan_once):
        s, end = s_and_end
        arr, new_end = json.decoder.JSONArray(s_and_end, scan_once)
        out = _LocList(arr)
        out.line = self._line(s, end - 1)
        return out, new_end


def _line_of(node, fallback):
    return getattr(node, "line", None) or fallback


def _number(value, what, line):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MechanismError(f"{what} must be a number, got {value!r}", line)
    return float(value)


def _vector(value, d, what, line):
    if not isinstance(value, list):
        raise MechanismError(f"{what} must be a list of {d} numbers", line)
    line = _line_of(value, line)
    if len(value) != d:
        raise MechanismError(f"{what} has length {len(value)}, expected {d}", line)
    return tuple(_number(x, what, line) for x in value)


def _column(node, j, d, line):
    if not isinstance(node, dict):
        raise MechanismError(f"column {j} must be an object", line)
    line = _line_of(node, line)
    unknown = set(node) - {"drift", "gaussian", "stable", "jumps", "killing"}
    if unknown:
        raise MechanismError(f"column {j}: unknown keys {sorted(unknown)}", line)
    if "drift" not in node:
        raise MechanismError(f"column {j}: missing 'drift'", line)
    try:
        drift = _vector(node["drift"], d, f"column {j} drift", line)
        gaussian = _number(node.get("gaussian", 0.0), f"column {j} gaussian", line)
        stable = node.get("stable")
        if stable is not None:
            sline = _line_of(stable, line)
            if not isinstance(stable, dict) or set(stable) != {"alpha", "scale"}:
                raise MechanismError(f"column {j}: stable must be {{alpha, scale}} or null",
                                     sline)
            try:
                stable = StableComponent(_number(stable["alpha"], "alpha", sline),
                                         _number(stable["scale"], "scale", sline))
            except MechanismError as exc:
                raise MechanismError(f"column {j}: {exc.bare_message}", sline) from None
        atoms = []
        jumps = node.get("jumps", [])
        if not isinstance(jumps, list):
            raise MechanismError(f"column {j}: jumps must be a list", line)
        for k, jump in enumerate(jumps):
            jline = _line_of(jump, line)
            if not isinstance(jump, dict) or set(jump) != {"rate", "vector"}:
                raise MechanismError(f"column {j} jump {k}: expected {{rate, vector}}", jline)
            try:
                atoms.append(JumpAtom(_number(jump["rate"], "rate", jline),
                                      _vector(jump["vector"], d, "vector", jline)))
            except MechanismError as exc:
                raise MechanismError(f"column {j} jump {k}: {exc.bare_message}",
                                     exc.line or jline) from None
        killing = _number(node.get("killing", 0.0), f"column {j} killing", line)
        return LevyColumn(drift, gaussian, stable, tuple(atoms), killing)
    except MechanismError as exc:
        if exc.line is not None:
            raise
        raise MechanismError(f"column {j}: {exc.bare_message}", line) from None


def loads_mechanism(text: str) -> BranchingMechanism:
    try:
        doc = _LocatingDecoder().decode(text)
    except json.JSONDecodeError as exc:
        raise MechanismError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno) from None
    if not isinstance(doc, dict):
        raise MechanismError("top level must be an object", 1)
    top = _line_of(doc, 1)
    if "d" not in doc or "columns" not in doc:
        raise MechanismError("top level needs keys 'd' and 'columns'", top)
    d = doc["d"]
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise MechanismError(f"d must be a positive integer, got {d!r}", top)
    cols = doc["columns"]
    if not isinstance(cols, list) or len(cols) != d:
        raise MechanismError(f"columns must be a list of {d} objects", _line_of(cols, top))
    columns = tuple(_column(node, j, d, _line_of(cols, top)) for j, node in enumerate(cols))
    try:
        return BranchingMechanism(columns)
    except MechanismError as exc:
        # locate the offending column when the message names one
        line = top
        msg = exc.bare_message
        if msg.startswith("column "):
            try:
                j = int(msg.split()[1].rstrip(":"))
                line = _line_of(cols[j], line)
            except (ValueError, IndexError):
                pass
        raise MechanismError(msg, line) from None


def load_mechanism(path) -> BranchingMechanism:
    return loads_mechanism(Path(path).read_text())


def dumps_mechanism(mech: BranchingMechanism) -> str:
    return json.dumps(mech.to_dict(), indent=2) + "\n"


def save_mechanism(mech: BranchingMechanism, path) -> None:
    Path(path).write_text(dumps_mechanism(mech))
