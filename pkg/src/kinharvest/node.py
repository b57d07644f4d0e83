"""Energy-harvesting node model.

All energies are integer nanojoules.  Spending ``s`` from storage level ``B``
draws ``ceil(s / eta(B))`` with the efficiency evaluated at the start-of-slot
level, and the storage then evolves as

    B' = min(B + Q - L - ceil(s / eta(B)), C).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError, InfeasibleSpendError, InputError
from .trace import ScalarSeries

NJ = 1e9  # nJ per J
PACKET_NJ = 1016  # 127-byte packet at 1 nJ/bit
MAX_PACKETS = 246
V_MAX, V_OP, V_MIN = 2.8, 2.5, 0.7
BLOCKED = np.iinfo(np.int64).max // 4  # cost marker for spends with eta = 0


@dataclass(frozen=True)
class EnergyProfile:
    """Per-slot harvested energy ``Q`` in integer nJ."""

    Q: np.ndarray
    T_int: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.T_int > 0:
            raise ConfigurationError("slot length must be positive")
        q = np.asarray(self.Q)
        if q.ndim != 1:
            raise ValueError("profile must be one-dimensional")
        if q.size and not np.all(np.equal(np.mod(q, 1), 0)):
            raise ValueError("profile energies must be integers")
        q = q.astype(np.int64)
        if np.any(q < 0):
            raise ValueError("profile energies must be non-negative")
        q.setflags(write=False)
        object.__setattr__(self, "Q", q)

    def __len__(self):
        return len(self.Q)

    def windows(self, size: int):
        """Consecutive complete windows of ``size`` slots."""
        for start in range(0, len(self.Q) - size + 1, size):
            yield EnergyProfile(self.Q[start : start + size], self.T_int, {"start": start})

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("slot,Q_nJ\n")
        for i, q in enumerate(self.Q):
            buf.write(f"{i},{int(q)}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, source, T_int: float = 1.0) -> "EnergyProfile":
        stream = open(source, newline="", encoding="utf-8") if isinstance(
            source, (str, os.PathLike)
        ) else source
        try:
            reader = csv.DictReader(stream)
            if reader.fieldnames is None or "Q_nJ" not in reader.fieldnames:
                raise InputError("profile CSV needs a Q_nJ column")
            values = []
            for row in reader:
                try:
                    values.append(int(row["Q_nJ"]))
                except (TypeError, ValueError):
                    raise InputError(f"line {reader.line_num}: bad Q_nJ value") from None
        finally:
            if stream is not source:
                stream.close()
        if not values:
            raise InputError("profile CSV has no slots")
        return cls(np.array(values, dtype=np.int64), T_int)


@dataclass(frozen=True)
class StorageModel:
    kind: str = "battery"
    C: int = 100 * PACKET_NJ
    V_max: float = V_MAX
    V_op: float = V_OP
    V_min: float = V_MIN

    def __post_init__(self):
        if self.kind not in ("battery", "capacitor"):
            raise ConfigurationError(f"unknown storage kind {self.kind!r}")
        if int(self.C) != self.C or self.C <= 0:
            raise ConfigurationError("capacity must be a positive integer (nJ)")
        object.__setattr__(self, "C", int(self.C))
        if not 0 < self.V_min < self.V_op < self.V_max:
            raise ConfigurationError("need 0 < V_min < V_op < V_max")


@dataclass(frozen=True)
class SpendingSet:
    values: tuple

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        if not vals:
            raise ConfigurationError("spending set is empty")
        if any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigurationError("spending set must be positive and strictly increasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def packets(cls, packet_nJ: int = PACKET_NJ, max_packets: int = MAX_PACKETS):
        return cls(tuple(packet_nJ * j for j in range(1, max_packets + 1)))

    @property
    def choices(self) -> tuple:
        """The set together with the zero spend."""
        return (0,) + self.values

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class UtilitySpec:
    """``linear`` (utility equals the spend) or an explicit integer ``table``."""

    kind: str = "linear"
    table: dict | None = None

    def __post_init__(self):
        if self.kind == "linear":
            return
        if self.kind != "table" or self.table is None:
            raise ConfigurationError("utility must be 'linear' or a 'table' with values")
        table = {}
        for s, u in self.table.items():
            if isinstance(u, float) and not u.is_integer():
                raise ConfigurationError(f"utility for s={s} is not an integer: {u}")
            if int(u) < 0:
                raise ConfigurationError("utilities must be non-negative")
            table[int(s)] = int(u)
        if table.get(0, 0) != 0:
            raise ConfigurationError("utility of the zero spend must be 0")
        table[0] = 0
        object.__setattr__(self, "table", table)

    def __call__(self, s: int) -> int:
        if self.kind == "linear":
            return int(s)
        try:
            return self.table[int(s)]
        except KeyError:
            raise ConfigurationError(f"utility table has no entry for s={s}") from None

    def check_covers(self, S: SpendingSet):
        for s in S.values:
            self(s)


@dataclass(frozen=True)
class LeakageSpec:
    """Per-slot storage loss ``L(i, B)``, required non-decreasing in ``B``.

    ``kind`` is ``none``, ``proportional`` (``floor(rate * B)``),
    ``constant`` (``amount`` every slot) or ``custom`` (``fn(i, B)``).
    """

    kind: str = "none"
    rate: float = 0.0
    amount: int = 0
    fn: Callable[[int, int], int] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("none", "proportional", "constant", "custom"):
            raise ConfigurationError(f"unknown leakage kind {self.kind!r}")
        if self.kind == "proportional" and not 0 <= self.rate <= 1:
            raise ConfigurationError("proportional leakage rate must be in [0, 1]")
        if self.kind == "constant" and self.amount < 0:
            raise ConfigurationError("constant leakage must be non-negative")
        if self.kind == "custom" and self.fn is None:
            raise ConfigurationError("custom leakage needs fn(i, B)")
        self._check_monotone()

    def __call__(self, i: int, B: int) -> int:
        return leakage(self, i, B)

    def _check_monotone(self):
        probe_B = sorted({0, 1, 2, 10, 100, 1016, 10_000, 101_600, 1_000_000, 10**8})
        for i in (0, 1, 7, 100, 3599):
            prev = -1
            for B in probe_B:
                v = leakage(self, i, B)
                if v < 0:
                    raise ConfigurationError(f"leakage is negative at i={i}, B={B}")
                if v < prev:
                    raise ConfigurationError(
                        f"leakage must be non-decreasing in B (violated at i={i}, B={B})"
                    )
                prev = v


def leakage(spec: LeakageSpec, i: int, B: int) -> int:
    if B < 0:
        raise DomainError("storage level must be non-negative")
    if spec.kind == "none":
        return 0
    if spec.kind == "proportional":
        return int(math.floor(spec.rate * B))
    if spec.kind == "constant":
        return int(spec.amount)
    return int(spec.fn(i, B))


NO_LEAKAGE = LeakageSpec()


# --------------------------------------------------------------------------
# storage physics


def _check_level(model: StorageModel, B):
    if not 0 <= B <= model.C:
        raise DomainError(f"storage level {B} outside [0, {model.C}]")


def v_out(model: StorageModel, B: int) -> float:
    """Capacitor voltage at stored energy ``B``."""
    _check_level(model, B)
    return math.sqrt(B / model.C) * model.V_max


def _eta_from_voltage(model: StorageModel, v: float) -> float:
    if model.V_min <= v <= model.V_op:
        return v / model.V_op
    if model.V_op < v <= model.V_max:
        return 1.0 - (v - model.V_op) / (2.0 * (model.V_max - model.V_op))
    return 0.0


def eta(model: StorageModel, B: int) -> float:
    """Conversion efficiency at storage level ``B``."""
    _check_level(model, B)
    if model.kind == "battery":
        return 1.0
    return _eta_from_voltage(model, v_out(model, B))


def eta_array(model: StorageModel, B: np.ndarray) -> np.ndarray:
    B = np.asarray(B)
    if model.kind == "battery":
        return np.ones(B.shape)
    v = np.sqrt(B / model.C) * model.V_max
    low = v / model.V_op
    high = 1.0 - (v - model.V_op) / (2.0 * (model.V_max - model.V_op))
    return np.where(v < model.V_min, 0.0, np.where(v <= model.V_op, low, high))


def spend_cost(model: StorageModel, B: int, s: int) -> int | None:
    """Charge drawn to deliver ``s`` at level ``B``, or None if blocked (eta = 0)."""
    if s == 0:
        return 0
    e = eta(model, B)
    if e <= 0.0:
        return None
    # round() absorbs float noise such as 2032.0000000000002 before the ceiling
    return int(math.ceil(round(s / e, 9)))


def spend_cost_array(model: StorageModel, B: np.ndarray, s: int) -> np.ndarray:
    """Vectorized :func:`spend_cost`; blocked entries get a huge cost."""
    B = np.asarray(B, dtype=np.int64)
    cost = np.zeros(B.shape, dtype=np.int64)
    if s == 0:
        return cost
    e = eta_array(model, B)
    ok = e > 0
    cost[~ok] = BLOCKED
    cost[ok] = np.ceil(np.round(s / e[ok], 9)).astype(np.int64)
    return cost


def harvested(Q_i: int, B: int, hook: Callable[[int], float] | None = None) -> int:
    """Energy actually stored from ``Q_i``; ``hook(B)`` scales it for B-dependent charging."""
    if hook is None:
        return int(Q_i)
    factor = hook(B)
    if not 0.0 <= factor <= 1.0:
        raise ConfigurationError("harvest hook must return a factor in [0, 1]")
    return int(math.floor(Q_i * factor))


def step(model: StorageModel, B: int, Q_i: int, s_i: int, L_i: int = 0, slot=None) -> int:
    """Storage level after one slot.

    Leakage cannot take the store below empty, so at most the remaining
    energy is lost.
    """
    _check_level(model, B)
    cost = spend_cost(model, B, s_i)
    if cost is None:
        raise InfeasibleSpendError(f"spend {s_i} blocked: efficiency is 0 at B={B}", slot)
    if cost > B:
        raise InfeasibleSpendError(f"spend {s_i} needs {cost} nJ but only {B} stored", slot)
    remaining = B + Q_i - cost
    return min(remaining - min(L_i, remaining), model.C)


def slot_power(power: ScalarSeries, T_int: float = 1.0) -> np.ndarray:
    """Mean power (W) of each complete slot; a trailing partial slot is dropped."""
    per = T_int * power.fs
    if per < 1 - 1e-9:
        raise ConfigurationError(
            f"slot length {T_int} s is shorter than one sample period ({1 / power.fs} s)"
        )
    n = int(round(per))
    if abs(per - n) > 1e-6 * per:
        raise ConfigurationError("slot length must be a multiple of the sample period")
    k = len(power.values) // n
    return power.values[: k * n].reshape(k, n).mean(axis=1)


def slots_from_power(power: ScalarSeries, T_int: float = 1.0, eta_h: float = 0.2) -> EnergyProfile:
    """Per-slot harvested energy ``round(eta_h * T_int * mean P)`` in nJ."""
    if not 0 <= eta_h <= 1:
        raise ConfigurationError("eta_h must lie in [0, 1]")
    q = np.rint(slot_power(power, T_int) * T_int * eta_h * NJ).astype(np.int64)
    return EnergyProfile(q, T_int, {"eta_h": eta_h})


# --------------------------------------------------------------------------
# node configuration


@dataclass(frozen=True)
class NodeConfig:
    storage: StorageModel = field(default_factory=StorageModel)
    S: SpendingSet = field(default_factory=SpendingSet.packets)
    utility: UtilitySpec = field(default_factory=UtilitySpec)
    leakage: LeakageSpec = NO_LEAKAGE

    @classmethod
    def from_dict(cls, d: dict) -> "NodeConfig":
        try:
            storage = StorageModel(
                kind=d.get("kind", "battery"),
                C=int(d.get("C_nJ", 100 * PACKET_NJ)),
                V_max=float(d.get("V_max", V_MAX)),
                V_op=float(d.get("V_op", V_OP)),
                V_min=float(d.get("V_min", V_MIN)),
            )
            s = d.get("S", {})
            if isinstance(s, list):
                S = SpendingSet(tuple(s))
            else:
                S = SpendingSet.packets(
                    int(s.get("packet_nJ", PACKET_NJ)), int(s.get("max_packets", MAX_PACKETS))
                )
            u = d.get("utility", {"kind": "linear"})
            table = u.get("table")
            if table is not None:
                table = {int(k): v for k, v in table.items()}
            utility = UtilitySpec(u.get("kind", "linear"), table)
            utility.check_covers(S)
            lk = d.get("leakage", {"kind": "none"})
            params = lk.get("params", {})
            leak = LeakageSpec(
                kind=lk.get("kind", "none"),
                rate=float(params.get("rate", 0.0)),
                amount=int(params.get("amount", 0)),
            )
        except (TypeError, AttributeError) as exc:
            raise ConfigurationError(f"malformed node config: {exc}") from None
        return cls(storage, S, utility, leak)

    @classmethod
    def load(cls, path) -> "NodeConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = {
            "kind": self.storage.kind,
            "C_nJ": self.storage.C,
            "V_max": self.storage.V_max,
            "V_op": self.storage.V_op,
            "V_min": self.storage.V_min,
            "leakage": {
                "kind": self.leakage.kind,
                "params": {"rate": self.leakage.rate, "amount": self.leakage.amount},
            },
            "S": list(self.S.values),
            "utility": {"kind": self.utility.kind},
        }
        if self.utility.table is not None:
            d["utility"]["table"] = {str(k): v for k, v in self.utility.table.items()}
        return d
