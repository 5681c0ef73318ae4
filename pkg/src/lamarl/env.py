"""Double-integrator robot swarm for shape assembly.

Robots are disks of radius ``r_avoid`` driven by an active force (the policy
output) and a passive Hooke's-law contact force. Each robot observes, within
``r_sense``, its nearest neighbours and the free cells of the target region.

Observation layout for robot i (length ``6 + 4 n_hn + 2 n_hc``)::

    [p_x, p_y, v_x, v_y, inside_region, min_neighbor_dist,
     n_hn x (dp_x, dp_y, dv_x, dv_y),
     target_x, target_y,
     (n_hc - 1) x (dc_x, dc_y)]

Unused neighbour / cell slots are zero. A cell counts as free for robot i
when no *other* robot is within ``r_avoid`` of its center.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .region import GridRegion, OccupancyMap, capacity_check, cell_distances, compute_occupancy, coverage_rate, uniformity

log = logging.getLogger(__name__)

SELF_DIM = 6
# Target offsets are saturated just inside the sensing disk so that every
# relative position in an observation stays strictly shorter than r_sense.
TARGET_SATURATION = 0.999


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    n_robot: int = 30
    r_sense: float = 0.4
    r_avoid: float = 0.1
    n_hn: int = 6
    n_hc: int = 80
    dt: float = 0.05
    f_max: float = 1.0
    k_contact: float = 50.0
    episode_length: int = 200
    mass: float = 1.0
    v_max: float = 1.0
    arena_margin: float = 1.0
    start_gap: float = 0.3  # distance from the shape's cell extent to the starting line
    start_spacing: float = 0.25  # must exceed 2 r_avoid
    start_jitter: float = 0.25  # max random shift of the starting line along its own axis

    def __post_init__(self):
        if not self.r_sense > 2 * self.r_avoid > 0:
            raise ValueError(f"need r_sense > 2 r_avoid > 0, got r_sense={self.r_sense}, r_avoid={self.r_avoid}")
        if self.n_hn < 1 or self.n_hc < 1:
            raise ValueError("n_hn and n_hc must be >= 1")
        if self.dt <= 0 or self.mass <= 0 or self.f_max <= 0 or self.v_max <= 0:
            raise ValueError("dt, mass, f_max and v_max must be positive")
        if self.start_spacing <= 2 * self.r_avoid:
            raise ValueError("start_spacing must exceed 2 r_avoid")
        if self.n_robot < 0 or self.episode_length < 1:
            raise ValueError("n_robot must be >= 0 and episode_length >= 1")

    @property
    def obs_dim(self) -> int:
        return SELF_DIM + 4 * self.n_hn + 2 * self.n_hc


@dataclass
class SwarmState:
    p: np.ndarray  # (n, 2)
    v: np.ndarray  # (n, 2)
    m: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return len(self.p)

    def copy(self) -> "SwarmState":
        return SwarmState(self.p.copy(), self.v.copy(), self.m.copy())


@dataclass(frozen=True)
class RobotState:
    p: np.ndarray
    v: np.ndarray
    m: float


@dataclass(frozen=True)
class LocalView:
    """Structured form of one robot's observation (the surface behaviours may read)."""

    p: np.ndarray
    v: np.ndarray
    inside: bool
    neighbors: np.ndarray  # (k, 4) relative [dp, dv], nearest first, k <= n_hn
    target: np.ndarray  # (2,) saturated p_t - p_i
    cells: np.ndarray  # (c, 2) relative free-cell positions, nearest first, c <= n_hc - 1
    r_sense: float
    r_avoid: float
    f_max: float = 1.0
    m: float = 1.0

    @property
    def min_neighbor_distance(self) -> float:
        if len(self.neighbors) == 0:
            return self.r_sense
        return float(min(np.hypot(self.neighbors[0, 0], self.neighbors[0, 1]), self.r_sense))

    def to_vector(self, n_hn: int, n_hc: int) -> np.ndarray:
        out = np.zeros(SELF_DIM + 4 * n_hn + 2 * n_hc)
        out[0:2] = self.p
        out[2:4] = self.v
        out[4] = 1.0 if self.inside else 0.0
        out[5] = self.min_neighbor_distance
        k = len(self.neighbors)
        out[SELF_DIM : SELF_DIM + 4 * k] = self.neighbors.ravel()
        t0 = SELF_DIM + 4 * n_hn
        out[t0 : t0 + 2] = self.target
        c = len(self.cells)
        out[t0 + 2 : t0 + 2 + 2 * c] = self.cells.ravel()
        return out


@dataclass
class StepResult:
    observations: np.ndarray  # (n, obs_dim)
    views: list
    rewards: np.ndarray  # (n,) in {0, 1}
    collisions: list  # sorted (i, j) pairs, i < j
    done: bool
    occupancy: OccupancyMap = field(repr=False, default=None)
    M1: float = float("nan")
    M2: float = float("nan")


RewardFn = Callable[[LocalView], float]


# --------------------------------------------------------------------------- sensing


def sense_neighbors(i: int, swarm: SwarmState, cfg: EnvConfig) -> list[int]:
    """Ids of robots within r_sense of robot i, nearest first (ties: lower id), at most n_hn."""
    d = np.hypot(*(swarm.p - swarm.p[i]).T)
    d[i] = np.inf
    ids = np.nonzero(d < cfg.r_sense)[0]
    order = np.lexsort((ids, d[ids]))
    return [int(j) for j in ids[order][: cfg.n_hn]]


def free_cells_for(i: int, swarm: SwarmState, region: GridRegion, occupancy: OccupancyMap, cfg: EnvConfig) -> np.ndarray:
    """Boolean mask of cells not occupied by any robot other than i."""
    own = np.hypot(*(region.cell_centers - swarm.p[i]).T) < cfg.r_avoid
    return occupancy.count - own.astype(int) == 0


def sense_cells(
    i: int,
    swarm: SwarmState,
    region: GridRegion,
    occupancy: OccupancyMap,
    cfg: EnvConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Indices of free cells within r_sense; uniform subsample if more than fit, nearest first.

    The target block shares the fixed-length cell section, so at most n_hc - 1 cells are listed.
    """
    d = np.hypot(*(region.cell_centers - swarm.p[i]).T)
    ids = np.nonzero(free_cells_for(i, swarm, region, occupancy, cfg) & (d < cfg.r_sense))[0]
    slots = cfg.n_hc - 1
    if len(ids) > slots:
        ids = np.sort(rng.choice(ids, size=slots, replace=False))
    return ids[np.lexsort((ids, d[ids]))]


def select_target_cell(
    i: int, swarm: SwarmState, region: GridRegion, occupancy: OccupancyMap, cfg: EnvConfig
) -> np.ndarray:
    """Center of the nearest free cell (nearest cell overall if none is free); ties -> lower index."""
    d = np.hypot(*(region.cell_centers - swarm.p[i]).T)
    free = free_cells_for(i, swarm, region, occupancy, cfg)
    if free.any():
        d = np.where(free, d, np.inf)
    return region.cell_centers[int(np.argmin(d))].copy()


def saturate(offset: np.ndarray, radius: float) -> np.ndarray:
    norm = float(np.hypot(*offset))
    limit = TARGET_SATURATION * radius
    if norm <= limit:
        return offset
    return offset * (limit / norm)


def build_local_view(
    i: int,
    swarm: SwarmState,
    region: GridRegion,
    occupancy: OccupancyMap,
    cfg: EnvConfig,
    rng: np.random.Generator,
) -> LocalView:
    p, v = swarm.p[i], swarm.v[i]
    nbrs = sense_neighbors(i, swarm, cfg)
    neighbors = np.column_stack([swarm.p[nbrs] - p, swarm.v[nbrs] - v]) if nbrs else np.zeros((0, 4))
    cells = region.cell_centers[sense_cells(i, swarm, region, occupancy, cfg, rng)] - p
    target = saturate(select_target_cell(i, swarm, region, occupancy, cfg) - p, cfg.r_sense)
    return LocalView(
        p=p.copy(),
        v=v.copy(),
        inside=bool(region.contains(p)[0]),
        neighbors=neighbors,
        target=target,
        cells=cells.reshape(-1, 2),
        r_sense=cfg.r_sense,
        r_avoid=cfg.r_avoid,
        f_max=cfg.f_max,
        m=float(swarm.m[i]),
    )


def build_observation(i, swarm, region, occupancy, cfg, rng) -> np.ndarray:
    return build_local_view(i, swarm, region, occupancy, cfg, rng).to_vector(cfg.n_hn, cfg.n_hc)


def observe(swarm: SwarmState, region: GridRegion, occupancy: OccupancyMap, cfg: EnvConfig, rng) -> tuple[np.ndarray, list]:
    views = [build_local_view(i, swarm, region, occupancy, cfg, rng) for i in range(swarm.n)]
    obs = np.array([vw.to_vector(cfg.n_hn, cfg.n_hc) for vw in views]).reshape(swarm.n, cfg.obs_dim)
    return obs, views


# --------------------------------------------------------------------------- dynamics


def arena_bounds(region: GridRegion, cfg: EnvConfig) -> tuple[float, float, float, float]:
    xmin, ymin, xmax, ymax = region.bounds
    m = cfg.arena_margin
    return xmin - m, ymin - m, xmax + m, ymax + m


def contact_forces(swarm: SwarmState, cfg: EnvConfig) -> np.ndarray:
    """Inter-robot spring forces k (2 r_avoid - d) unit(p_i - p_j) for overlapping pairs."""
    n = swarm.n
    f = np.zeros((n, 2))
    if n < 2:
        return f
    diff = swarm.p[:, None, :] - swarm.p[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    reach = 2.0 * cfg.r_avoid
    iu, ju = np.triu_indices(n, k=1)
    dij = d[iu, ju]
    hit = dij < reach
    if not hit.any():
        return f
    iu, ju, dij = iu[hit], ju[hit], dij[hit]
    unit = diff[iu, ju] / np.where(dij > 0, dij, 1.0)[:, None]
    # Coincident pair: push the higher id along +x.
    unit[dij == 0] = (-1.0, 0.0)
    pair = cfg.k_contact * (reach - dij)[:, None] * unit
    np.add.at(f, iu, pair)
    np.add.at(f, ju, -pair)
    return f


def wall_forces(swarm: SwarmState, arena: tuple[float, float, float, float], cfg: EnvConfig) -> np.ndarray:
    xmin, ymin, xmax, ymax = arena
    r = cfg.r_avoid
    k = cfg.k_contact
    x, y = swarm.p[:, 0], swarm.p[:, 1]
    fx = k * (np.maximum(0.0, r - (x - xmin)) - np.maximum(0.0, r - (xmax - x)))
    fy = k * (np.maximum(0.0, r - (y - ymin)) - np.maximum(0.0, r - (ymax - y)))
    return np.column_stack([fx, fy])


def passive_forces(swarm: SwarmState, region: GridRegion, cfg: EnvConfig) -> np.ndarray:
    return contact_forces(swarm, cfg) + wall_forces(swarm, arena_bounds(region, cfg), cfg)


def passive_force(i: int, swarm: SwarmState, region: GridRegion, cfg: EnvConfig) -> np.ndarray:
    return passive_forces(swarm, region, cfg)[i]


def collision_pairs(positions: np.ndarray, r_avoid: float) -> list[tuple[int, int]]:
    n = len(positions)
    if n < 2:
        return []
    diff = positions[:, None, :] - positions[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    iu, ju = np.triu_indices(n, k=1)
    hit = d[iu, ju] < 2.0 * r_avoid
    return [(int(a), int(b)) for a, b in zip(iu[hit], ju[hit])]


def integrate(swarm: SwarmState, actions: np.ndarray, region: GridRegion, cfg: EnvConfig) -> SwarmState:
    """One semi-implicit Euler step: v += dt (f_a + f_b) / m, clamp |v|, then p += dt v."""
    a = np.asarray(actions, dtype=float).reshape(swarm.n, 2)
    if not np.all(np.isfinite(a)):
        raise ValueError("actions must be finite")
    clipped = np.clip(a, -cfg.f_max, cfg.f_max)
    if np.any(clipped != a):
        log.debug("clamped %d action components to +/-%g", int(np.sum(clipped != a)), cfg.f_max)
    force = clipped + passive_forces(swarm, region, cfg)
    v = swarm.v + cfg.dt * force / swarm.m[:, None]
    speed = np.hypot(v[:, 0], v[:, 1])
    fast = speed > cfg.v_max
    if fast.any():
        log.debug("velocity clamp active for %d robots", int(fast.sum()))
        v[fast] *= (cfg.v_max / speed[fast])[:, None]
    return SwarmState(swarm.p + cfg.dt * v, v, swarm.m.copy())


def step(
    swarm: SwarmState,
    actions: np.ndarray,
    region: GridRegion,
    cfg: EnvConfig,
    reward_fn: Optional[RewardFn],
    rng: np.random.Generator,
    t: int = 0,
) -> tuple[SwarmState, StepResult]:
    new = integrate(swarm, actions, region, cfg)
    occ = compute_occupancy(region, new.p, cfg.r_avoid)
    obs, views = observe(new, region, occ, cfg, rng)
    rewards = np.array([float(reward_fn(vw)) for vw in views]) if reward_fn else np.zeros(new.n)
    result = StepResult(
        observations=obs,
        views=views,
        rewards=rewards,
        collisions=collision_pairs(new.p, cfg.r_avoid),
        done=t + 1 >= cfg.episode_length,
        occupancy=occ,
        M1=occ.n_occupied / region.n_cell,
        M2=uniformity(region, new.p) if new.n else float("nan"),
    )
    return new, result


# --------------------------------------------------------------------------- episode lifecycle


def _line_positions(
    n: int, side: int, region: GridRegion, arena, cfg: EnvConfig, shift: float = 0.0
) -> Optional[np.ndarray]:
    """Rows of robots parallel to one side of the shape's cell extent; None if they do not fit."""
    if n == 0:
        return np.zeros((0, 2))
    xmin, ymin, xmax, ymax = region.cell_extent()
    axmin, aymin, axmax, aymax = arena
    s = cfg.start_spacing
    horizontal = side in (0, 1)  # 0: below, 1: above, 2: left, 3: right
    lo, hi = (axmin, axmax) if horizontal else (aymin, aymax)
    usable = (hi - lo) - 2 * cfg.r_avoid - 1e-9
    per_row = int(usable // s) + 1
    if per_row < 1:
        return None
    n_rows = -(-n // per_row)
    center = (0.5 * (xmin + xmax) if horizontal else 0.5 * (ymin + ymax)) + shift
    pts = []
    for row in range(n_rows):
        k = min(per_row, n - row * per_row)
        along = center + (np.arange(k) - 0.5 * (k - 1)) * s
        shift = max(0.0, lo + cfg.r_avoid - along.min()) - max(0.0, along.max() - (hi - cfg.r_avoid))
        along = along + shift
        offset = cfg.start_gap + row * s
        if side == 0:
            pts += [(a, ymin - offset) for a in along]
        elif side == 1:
            pts += [(a, ymax + offset) for a in along]
        elif side == 2:
            pts += [(xmin - offset, a) for a in along]
        else:
            pts += [(xmax + offset, a) for a in along]
    p = np.array(pts, dtype=float)
    inside_arena = (
        (p[:, 0] >= axmin + cfg.r_avoid)
        & (p[:, 0] <= axmax - cfg.r_avoid)
        & (p[:, 1] >= aymin + cfg.r_avoid)
        & (p[:, 1] <= aymax - cfg.r_avoid)
    )
    if not inside_arena.all():
        return None
    if cell_distances(region, p).min() < cfg.r_avoid:
        return None
    return p


def reset(cfg: EnvConfig, shape_library: Sequence[GridRegion], rng: np.random.Generator) -> tuple[SwarmState, GridRegion]:
    """Draw a shape uniformly and line the robots up outside it, at rest."""
    if not shape_library:
        raise ValueError("shape library is empty")
    region = shape_library[int(rng.integers(len(shape_library)))]
    if not capacity_check(cfg.n_robot, cfg.r_avoid, region):
        raise ValueError(f"shape {region.name!r} fails the capacity check for {cfg.n_robot} robots")
    arena = arena_bounds(region, cfg)
    first = int(rng.integers(4))
    shift = float(rng.uniform(-cfg.start_jitter, cfg.start_jitter)) if cfg.start_jitter > 0 else 0.0
    for attempt in range(4):
        p = _line_positions(cfg.n_robot, (first + attempt) % 4, region, arena, cfg, shift)
        if p is not None:
            break
    else:
        raise PlacementError(f"could not place {cfg.n_robot} robots around shape {region.name!r}; enlarge arena_margin")
    n = cfg.n_robot
    return SwarmState(p, np.zeros((n, 2)), np.full(n, cfg.mass)), region


class SwarmEnv:
    """Stateful wrapper: owns the swarm, the current region and an RNG stream."""

    def __init__(
        self,
        cfg: EnvConfig,
        shape_library: Sequence[GridRegion],
        reward_fn: Optional[RewardFn] = None,
        seed: int | np.random.SeedSequence | None = None,
    ):
        bad = [r.name for r in shape_library if not capacity_check(cfg.n_robot, cfg.r_avoid, r)]
        if bad:
            raise ValueError(f"shapes failing the capacity check for {cfg.n_robot} robots: {bad}")
        self.cfg = cfg
        self.shapes = list(shape_library)
        self.reward_fn = reward_fn
        self.rng = np.random.default_rng(seed)
        self.swarm: SwarmState | None = None
        self.region: GridRegion | None = None
        self.t = 0

    def reset(self) -> tuple[np.ndarray, list]:
        self.swarm, self.region = reset(self.cfg, self.shapes, self.rng)
        self.t = 0
        self.occupancy = compute_occupancy(self.region, self.swarm.p, self.cfg.r_avoid)
        return observe(self.swarm, self.region, self.occupancy, self.cfg, self.rng)

    def step(self, actions: np.ndarray) -> StepResult:
        if self.swarm is None:
            raise RuntimeError("call reset() before step()")
        self.swarm, result = step(self.swarm, actions, self.region, self.cfg, self.reward_fn, self.rng, self.t)
        self.t += 1
        self.occupancy = result.occupancy
        return result

    def metrics(self) -> tuple[float, float]:
        return (
            coverage_rate(self.region, self.swarm.p, self.cfg.r_avoid),
            uniformity(self.region, self.swarm.p),
        )
