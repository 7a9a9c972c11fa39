"""Domain model: providers, applications, scenarios and allocations.

A scenario describes N providers that each own a block of applications.
Every application requests an amount of each of K resource types; every
provider holds a capacity vector over the same K types.  An allocation says
how much of resource k provider n hands to application i.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_PLAYERS = 24

REQUEST_LOW = 1.0
REQUEST_HIGH = 10.0
CAPACITY_SPREAD = 0.5  # capacities drawn from [(1-s)*demand, (1+s)*demand]

SCENARIO_FORMAT_VERSION = 1


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class UtilitySpec:
    """Per-player utility shape for its native applications.

    kind is "linear" (value c_ik per delivered unit) or "sigmoid"
    (logistic satisfaction centered at the request, steepness mu).
    """

    kind: str
    mu: float | None = None
    coeffs: np.ndarray | None = None  # (M_n, K), linear only

    def __post_init__(self):
        if self.kind not in ("linear", "sigmoid"):
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if self.kind == "sigmoid":
            if self.mu is None or not np.isfinite(self.mu) or self.mu <= 0:
                raise ValueError("sigmoid utility needs mu > 0")
            if self.coeffs is not None:
                raise ValueError("sigmoid utility takes no coefficients")
        else:
            if self.mu is not None:
                raise ValueError("linear utility takes no mu")
            if self.coeffs is not None:
                object.__setattr__(self, "coeffs", _frozen(self.coeffs))


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance shared by every pipeline stage.

    Arrays use a flat application axis: requests[i] is application i's
    request vector and owner[i] the player that brought it.  Player n's
    native block is contiguous and ordered by player index.
    """

    n_players: int
    n_resources: int
    capacities: np.ndarray  # (N, K)
    requests: np.ndarray  # (M, K) stacked over all players
    owner: np.ndarray  # (M,) int, owner[i] = player owning app i
    utilities: tuple[UtilitySpec, ...]  # one per player
    w: np.ndarray  # (N,) own-utility weights
    zeta: np.ndarray  # (N,) sharing-income weights
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "capacities", _frozen(self.capacities))
        object.__setattr__(self, "requests", _frozen(self.requests))
        owner = np.ascontiguousarray(np.asarray(self.owner, dtype=int))
        owner.flags.writeable = False
        object.__setattr__(self, "owner", owner)
        object.__setattr__(self, "w", _frozen(self.w))
        object.__setattr__(self, "zeta", _frozen(self.zeta))
        object.__setattr__(self, "utilities", tuple(self.utilities))
        problems = validate_scenario(self, collect_only=True)
        if problems:
            raise ValueError("invalid scenario: " + "; ".join(problems))

    # -- derived shapes ---------------------------------------------------

    @property
    def m_total(self) -> int:
        return self.requests.shape[0]

    @property
    def m_per_player(self) -> tuple[int, ...]:
        return tuple(int(np.sum(self.owner == n)) for n in range(self.n_players))

    def apps_of(self, n: int) -> np.ndarray:
        """Indices of player n's native applications."""
        return np.flatnonzero(self.owner == n)

    @property
    def grand_mask(self) -> int:
        return (1 << self.n_players) - 1

    def coeff_matrix(self) -> np.ndarray:
        """Linear coefficients stacked to (M, K); ones by default, zeros
        are meaningless for sigmoid rows (never read there)."""
        c = np.ones((self.m_total, self.n_resources))
        for n, spec in enumerate(self.utilities):
            if spec.kind == "linear" and spec.coeffs is not None:
                c[self.owner == n] = spec.coeffs
        return c

    def digest(self) -> str:
        """Stable content hash of the serialized form."""
        return hashlib.sha256(
            scenario_to_json(self).encode("utf-8")
        ).hexdigest()[:16]


def validate_scenario(s: Scenario, collect_only: bool = False) -> list[str]:
    """Check every structural invariant; raise ValueError listing all
    violations unless collect_only, in which case the list is returned."""
    problems: list[str] = []
    n, k = s.n_players, s.n_resources
    if not (1 <= n <= MAX_PLAYERS):
        problems.append(f"n_players must be in [1, {MAX_PLAYERS}], got {n}")
    if k < 1:
        problems.append(f"n_resources must be >= 1, got {k}")
    if s.capacities.shape != (n, k):
        problems.append(f"capacities shape {s.capacities.shape} != {(n, k)}")
    if s.requests.ndim != 2 or s.requests.shape[1] != k:
        problems.append(f"requests shape {s.requests.shape} incompatible with K={k}")
    if s.owner.shape != (s.requests.shape[0],):
        problems.append("owner must align with requests rows")
    elif n >= 1:
        if s.owner.min(initial=0) < 0 or s.owner.max(initial=0) >= n:
            problems.append("owner indices out of range")
        elif not np.all(np.diff(s.owner) >= 0):
            problems.append("applications must be grouped by owner in player order")
        elif any(m == 0 for m in s.m_per_player):
            problems.append("every player must own at least one application")
    if len(s.utilities) != n:
        problems.append(f"need {n} utility specs, got {len(s.utilities)}")
    else:
        for i, spec in enumerate(s.utilities):
            if spec.kind == "linear" and spec.coeffs is not None:
                want = (int(np.sum(s.owner == i)), k)
                if spec.coeffs.shape != want:
                    problems.append(f"player {i} coeffs shape {spec.coeffs.shape} != {want}")
                elif np.any(spec.coeffs < 0) or not np.all(np.isfinite(spec.coeffs)):
                    problems.append(f"player {i} coeffs must be finite and >= 0")
    for name, arr in (("capacities", s.capacities), ("requests", s.requests)):
        if not np.all(np.isfinite(arr)):
            problems.append(f"{name} must be finite")
        elif np.any(arr < 0):
            problems.append(f"{name} must be nonnegative")
    for name, arr in (("w", s.w), ("zeta", s.zeta)):
        if arr.shape != (n,):
            problems.append(f"{name} must have shape ({n},)")
        elif not np.all(np.isfinite(arr)) or np.any(arr < 0):
            problems.append(f"{name} must be finite and >= 0")
    if problems and not collect_only:
        raise ValueError("invalid scenario: " + "; ".join(problems))
    return problems


# ---------------------------------------------------------------------------
# coalitions


@dataclass(frozen=True, order=True)
class Coalition:
    """Subset of players encoded as a bitmask (bit n == player n)."""

    mask: int

    def __post_init__(self):
        if not (0 <= self.mask < (1 << MAX_PLAYERS)):
            raise ValueError(f"mask {self.mask} out of range for {MAX_PLAYERS} players")

    @classmethod
    def from_members(cls, members) -> "Coalition":
        mask = 0
        for p in members:
            if not (0 <= int(p) < MAX_PLAYERS):
                raise ValueError(f"player index {p} out of range")
            mask |= 1 << int(p)
        return cls(mask)

    @classmethod
    def singleton(cls, player: int) -> "Coalition":
        return cls.from_members([player])

    @classmethod
    def grand(cls, n_players: int) -> "Coalition":
        if not (1 <= n_players <= MAX_PLAYERS):
            raise ValueError(f"n_players must be in [1, {MAX_PLAYERS}]")
        return cls((1 << n_players) - 1)

    def members(self) -> tuple[int, ...]:
        return tuple(p for p in range(MAX_PLAYERS) if self.mask >> p & 1)

    @property
    def size(self) -> int:
        return self.mask.bit_count()

    def contains(self, player: int) -> bool:
        return bool(self.mask >> player & 1)

    def union(self, other: "Coalition") -> "Coalition":
        return Coalition(self.mask | other.mask)

    def is_disjoint(self, other: "Coalition") -> bool:
        return self.mask & other.mask == 0

    def label(self) -> str:
        return "{" + ",".join(str(p + 1) for p in self.members()) + "}"


def all_coalitions(n_players: int):
    """Every nonempty coalition of the first n_players, ascending mask."""
    for mask in range(1, 1 << n_players):
        yield Coalition(mask)


# ---------------------------------------------------------------------------
# allocations


@dataclass(frozen=True)
class Allocation:
    """x[n, i, k] = amount of resource k provider n gives application i."""

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        if self.x.ndim != 3:
            raise ValueError("allocation must be (providers, apps, resources)")
        if np.any(self.x < 0):
            raise ValueError("allocation entries must be >= 0")

    @classmethod
    def zeros(cls, s: Scenario) -> "Allocation":
        return cls(np.zeros((s.n_players, s.m_total, s.n_resources)))

    def total_received(self) -> np.ndarray:
        """Per-application receipt summed over providers, shape (M, K)."""
        return self.x.sum(axis=0)

    def used_capacity(self) -> np.ndarray:
        """Per-provider spend summed over applications, shape (N, K)."""
        return self.x.sum(axis=1)


def audit_allocation(
    s: Scenario,
    alloc: Allocation,
    coalition: Coalition | None = None,
    tol: float = 1e-9,
) -> list[str]:
    """Independent feasibility check by direct constraint arithmetic.

    Verifies nonnegativity, per-provider capacity, per-application request
    caps, and (when a coalition is given) that providers outside it supply
    nothing and applications outside it receive nothing.  Returns the list
    of violated constraints, empty when feasible within tol.
    """
    x = alloc.x
    problems = []
    if x.shape != (s.n_players, s.m_total, s.n_resources):
        return [f"allocation shape {x.shape} does not match scenario"]
    if np.any(x < -tol):
        problems.append(f"negative entries as low as {x.min():g}")
    over_cap = x.sum(axis=1) - s.capacities
    if np.any(over_cap > tol):
        n, k = np.unravel_index(np.argmax(over_cap), over_cap.shape)
        problems.append(f"provider {n} exceeds capacity of resource {k} by {over_cap[n, k]:g}")
    over_req = x.sum(axis=0) - s.requests
    if np.any(over_req > tol):
        i, k = np.unravel_index(np.argmax(over_req), over_req.shape)
        problems.append(f"application {i} oversupplied on resource {k} by {over_req[i, k]:g}")
    if coalition is not None:
        outside_p = [n for n in range(s.n_players) if not coalition.contains(n)]
        if outside_p and np.any(np.abs(x[outside_p]) > tol):
            problems.append("provider outside the coalition supplies resources")
        app_out = ~np.isin(s.owner, coalition.members())
        if np.any(app_out) and np.any(np.abs(x[:, app_out, :]) > tol):
            problems.append("application outside the coalition receives resources")
    return problems


# ---------------------------------------------------------------------------
# generation

def generate_scenario(
    n_players: int,
    n_resources: int,
    m_per_player: int,
    utility: str = "linear",
    mu: float | None = None,
    seed: int = 0,
    w: float = 1.0,
    zeta: float = 1.0,
) -> Scenario:
    """Draw a random scenario, deterministic in seed.

    Requests are uniform on [1, 10].  Each provider's capacity per resource
    is uniform on [0.5 D, 1.5 D] where D is its own applications' total
    request for that resource, so providers sit within 50% of self-
    sufficiency either way.  Draw order is fixed (per player: request
    matrix, then capacity vector) so identical seeds give identical
    scenarios byte for byte.
    """
    if n_players < 1 or n_resources < 1 or m_per_player < 1:
        raise ValueError("n_players, n_resources and m_per_player must all be >= 1")
    if n_players > MAX_PLAYERS:
        raise ValueError(f"at most {MAX_PLAYERS} players supported")
    if utility == "sigmoid" and mu is None:
        raise ValueError("sigmoid generation needs mu")
    if utility == "linear" and mu is not None:
        raise ValueError("linear generation takes no mu")
    rng = np.random.default_rng(seed)
    req_blocks, caps = [], []
    for _ in range(n_players):
        r = rng.uniform(REQUEST_LOW, REQUEST_HIGH, size=(m_per_player, n_resources))
        demand = r.sum(axis=0)
        c = rng.uniform((1 - CAPACITY_SPREAD) * demand, (1 + CAPACITY_SPREAD) * demand)
        req_blocks.append(r)
        caps.append(c)
    if utility == "linear":
        specs = tuple(UtilitySpec("linear") for _ in range(n_players))
    else:
        specs = tuple(UtilitySpec("sigmoid", mu=float(mu)) for _ in range(n_players))
    return Scenario(
        n_players=n_players,
        n_resources=n_resources,
        capacities=np.vstack(caps),
        requests=np.vstack(req_blocks),
        owner=np.repeat(np.arange(n_players), m_per_player),
        utilities=specs,
        w=np.full(n_players, float(w)),
        zeta=np.full(n_players, float(zeta)),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# serialization (lossless: floats survive the JSON round trip exactly)


def scenario_to_json(s: Scenario) -> str:
    players = []
    for n in range(s.n_players):
        spec = s.utilities[n]
        if spec.kind == "sigmoid":
            utility = {"kind": "sigmoid", "mu": spec.mu}
        else:
            utility = {"kind": "linear"}
            if spec.coeffs is not None:
                utility["coeffs"] = spec.coeffs.tolist()
        players.append(
            {
                "capacity": s.capacities[n].tolist(),
                "requests": s.requests[s.owner == n].tolist(),
                "utility": utility,
                "w": float(s.w[n]),
                "zeta": float(s.zeta[n]),
            }
        )
    doc = {
        "version": SCENARIO_FORMAT_VERSION,
        "n": s.n_players,
        "k": s.n_resources,
        "players": players,
        "seed": s.seed,
    }
    return json.dumps(doc, indent=2)


def scenario_from_json(text: str) -> Scenario:
    doc = json.loads(text)
    if doc.get("version") != SCENARIO_FORMAT_VERSION:
        raise ValueError(f"unsupported scenario version {doc.get('version')!r}")
    n, k = doc["n"], doc["k"]
    caps, reqs, owner, specs, ws, zs = [], [], [], [], [], []
    for idx, p in enumerate(doc["players"]):
        caps.append(p["capacity"])
        block = np.asarray(p["requests"], dtype=float).reshape(-1, k)
        reqs.append(block)
        owner.extend([idx] * block.shape[0])
        u = p["utility"]
        if u["kind"] == "sigmoid":
            specs.append(UtilitySpec("sigmoid", mu=u["mu"]))
        else:
            coeffs = np.asarray(u["coeffs"], dtype=float) if "coeffs" in u else None
            specs.append(UtilitySpec("linear", coeffs=coeffs))
        ws.append(p["w"])
        zs.append(p["zeta"])
    return Scenario(
        n_players=n,
        n_resources=k,
        capacities=np.asarray(caps, dtype=float),
        requests=np.vstack(reqs) if reqs else np.zeros((0, k)),
        owner=np.asarray(owner, dtype=int),
        utilities=tuple(specs),
        w=np.asarray(ws, dtype=float),
        zeta=np.asarray(zs, dtype=float),
        seed=doc.get("seed"),
    )


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(scenario_to_json(s), encoding="utf-8")


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_json(Path(path).read_text(encoding="utf-8"))
