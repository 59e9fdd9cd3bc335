"""Typed mass partitions and exact simulation of multi-type fragmentations.

Two simulators are provided. :func:`simulate_homogeneous_partition` follows
the Poissonian construction on a finite ground set ``{1, ..., n}``, with
paintbox dislocations and per-integer erosion. :func:`simulate_mass_tree`
tracks exact block masses instead, generation by generation and vectorized,
with the self-similar time change applied analytically (a block of mass
``x`` and type ``j`` dislocates at rate ``x**alpha * nu_j(total)``).

Types are 0-based. The placeholder type of dust and of singleton blocks in
restricted partitions is :data:`NO_TYPE`.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ParameterError
from .map_model import JumpLaw, MapParams, SubordinatorParams
from .map_sim import simulate_batch

NO_TYPE = -1
MASS_TOL = 1e-12


# ------------------------------------------------------------ partitions


@dataclass(frozen=True)
class MassPartition:
    """Typed mass partition ``((s_1, i_1), (s_2, i_2), ...)`` plus dust.

    Parts are stored in lexicographically nonincreasing ``(mass, type)``
    order; zero masses are never stored.
    """

    parts: tuple = ()

    def __post_init__(self):
        parts = []
        for s, i in self.parts:
            s = float(s)
            if not (np.isfinite(s) and 0 < s <= 1 + MASS_TOL):
                raise ParameterError(f"part mass must lie in (0, 1], got {s!r}")
            if not (isinstance(i, (int, np.integer)) and i >= 0):
                raise ParameterError(f"part type must be a nonnegative integer, got {i!r}")
            parts.append((min(s, 1.0), int(i)))
        parts.sort(reverse=True)
        total = sum(s for s, _ in parts)
        if total > 1 + MASS_TOL:
            raise ParameterError(f"part masses sum to {total!r} > 1")
        object.__setattr__(self, "parts", tuple(parts))

    @property
    def dust(self):
        return max(0.0, 1.0 - math.fsum(s for s, _ in self.parts))

    @property
    def masses(self):
        return np.array([s for s, _ in self.parts])

    @property
    def types(self):
        return np.array([i for _, i in self.parts], dtype=int)

    def __len__(self):
        return len(self.parts)

    def is_conservative(self):
        return self.dust <= MASS_TOL


def s_pow_vector(partition, p, K):
    """Row vector with entry ``j`` equal to the sum of ``s**p`` over parts of type ``j``."""
    out = np.zeros(K)
    for s, i in partition.parts:
        if i >= K:
            raise ParameterError(f"part type {i} out of range for K = {K}")
        out[i] += s ** p
    return out


@dataclass
class DislocationMeasure:
    """Finite dislocation measures and erosion coefficients per type.

    ``atoms[i]`` is a sequence of ``(weight, MassPartition)`` pairs making up
    ``nu_i``; ``erosion[i]`` is ``c_i``.
    """

    atoms: tuple
    erosion: np.ndarray = None

    def __post_init__(self):
        K = len(self.atoms)
        if K < 1:
            raise ParameterError("need at least one type")
        fixed = []
        for i, row in enumerate(self.atoms):
            out = []
            for w, part in row:
                w = float(w)
                if not (np.isfinite(w) and w > 0):
                    raise ParameterError(f"atom weight for type {i} must be finite and > 0, got {w!r}")
                if not isinstance(part, MassPartition):
                    part = MassPartition(tuple(part))
                for _, j in part.parts:
                    if j >= K:
                        raise ParameterError(f"atom of type {i} has part type {j} >= K = {K}")
                out.append((w, part))
            fixed.append(tuple(out))
        self.atoms = tuple(fixed)
        c = np.zeros(K) if self.erosion is None else np.asarray(self.erosion, dtype=float)
        if c.shape != (K,) or np.any(~np.isfinite(c)) or np.any(c < 0):
            raise ParameterError(f"erosion must be {K} finite nonnegative numbers")
        self.erosion = c
        for i in range(K):
            # integrability of 1 - s_1 1{i_1 = i}: automatic for finite measures
            integral = sum(
                w * (1 - (part.parts[0][0] if part.parts and part.parts[0][1] == i else 0.0))
                for w, part in self.atoms[i]
            )
            assert np.isfinite(integral)

    @property
    def K(self):
        return len(self.atoms)

    @property
    def total_rates(self):
        return np.array([sum(w for w, _ in row) for row in self.atoms])

    def is_conservative(self):
        return bool(np.all(self.erosion == 0)) and all(
            part.is_conservative() for row in self.atoms for _, part in row
        )

    def max_parts(self):
        return max((len(part) for row in self.atoms for _, part in row), default=0)


@dataclass(frozen=True)
class TypedPartition:
    """Partition of ``{1, ..., n}`` into typed blocks, listed by least element.

    Singleton blocks carry :data:`NO_TYPE`.
    """

    n: int
    blocks: tuple

    def __post_init__(self):
        seen = sorted(k for b, _ in self.blocks for k in b)
        if seen != list(range(1, self.n + 1)):
            raise ParameterError("blocks do not partition {1, ..., n}")
        for b, t in self.blocks:
            if (len(b) <= 1) != (t == NO_TYPE):
                raise ParameterError("type placeholder must mark exactly the singleton blocks")

    @classmethod
    def from_groups(cls, n, groups):
        """Build from ``(elements, type)`` pairs, typing singletons as NO_TYPE."""
        blocks = []
        for elems, t in groups:
            elems = tuple(sorted(elems))
            if not elems:
                continue
            blocks.append((elems, t if len(elems) > 1 else NO_TYPE))
        blocks.sort(key=lambda bt: bt[0][0])
        return cls(n, tuple(blocks))

    def block_of(self, k):
        for b, t in self.blocks:
            if k in b:
                return b, t
        raise KeyError(k)


def paintbox_sample(partition, n, rng=None, elements=None):
    """Kingman paintbox: each integer joins part ``k`` with probability ``s_k``.

    Integers landing in the dust become untyped singletons. ``elements``
    defaults to ``1..n``.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(rng)
    labels = _paintbox_labels(partition, n, rng)
    elems = np.arange(1, n + 1) if elements is None else np.asarray(elements)
    groups = []
    for k, (_, t) in enumerate(partition.parts):
        members = elems[labels == k]
        if members.size:
            groups.append((members.tolist(), t))
    for e in elems[labels == -1]:
        groups.append(([int(e)], NO_TYPE))
    if elements is None:
        return TypedPartition.from_groups(n, groups)
    return groups


def _paintbox_labels(partition, n, rng):
    """Part index for each of ``n`` integers, ``-1`` for dust."""
    if not partition.parts:
        return np.full(n, -1)
    cum = np.cumsum(partition.masses)
    u = rng.random(n)
    lab = np.searchsorted(cum, u, side="right")
    return np.where(lab >= len(partition), -1, lab)


@dataclass(frozen=True)
class BlockEvent:
    """One dislocation or erosion event.

    ``atom`` is the index of the atom in ``nu_type`` or ``-1`` for erosion.
    ``children`` lists ``(mass, type)`` of the resulting blocks.
    """

    time: float
    parent: int
    atom: int
    children: tuple


# --------------------------------------------------- partition simulator


@dataclass
class _Block:
    elems: list
    mass: float
    typ: int
    since: float


@dataclass
class PartitionRun:
    """Output of :func:`simulate_homogeneous_partition`.

    ``path`` lists ``(time, TypedPartition)`` after each visible change;
    ``tagged`` lists ``(time, mass, type)`` of the block holding integer 1
    after each change affecting it (mass is its value at that time; it then
    decays by erosion at rate ``c_type``).
    """

    n: int
    horizon: float
    erosion: np.ndarray
    events: list = field(default_factory=list)
    path: list = field(default_factory=list)
    tagged: list = field(default_factory=list)

    def partition_at(self, t):
        cur = self.path[0][1]
        for s, part in self.path:
            if s > t:
                break
            cur = part
        return cur

    def tagged_at(self, t):
        """``(mass, type)`` of the tagged block at time ``t``."""
        if t > self.horizon:
            raise ParameterError("t beyond horizon")
        s0, m, i = self.tagged[0]
        for s, mm, ii in self.tagged:
            if s > t:
                break
            s0, m, i = s, mm, ii
        if i == NO_TYPE:
            return 0.0, NO_TYPE
        return m * math.exp(-self.erosion[i] * (t - s0)), i


def simulate_homogeneous_partition(model, start_type, n, horizon, rng=None):
    """Exact simulation of the homogeneous fragmentation restricted to ``[n]``.

    Each block with positive mass dislocates at rate ``nu_type(total)``: an
    atom is drawn proportionally to its weight and paintboxed over the
    block's integers. Every integer independently erodes to a dust singleton
    at rate ``c`` of its block's type. Block masses are carried along exactly,
    so the tagged block of integer 1 can be compared with the tagged MAP.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    if not (0 < horizon < math.inf):
        raise ParameterError("horizon must be positive and finite")
    if not 0 <= start_type < model.K:
        raise ParameterError(f"start type {start_type} out of range")
    rng = np.random.default_rng(rng)
    W = model.total_rates
    c = model.erosion
    cum = [np.cumsum([w for w, _ in row]) for row in model.atoms]

    blocks = {0: _Block(list(range(1, n + 1)), 1.0, start_type, 0.0)}
    dust = []
    next_id = 1
    run = PartitionRun(n, horizon, c)

    def snapshot():
        groups = [(b.elems, b.typ) for b in blocks.values()]
        groups += [([e], NO_TYPE) for e in dust]
        return TypedPartition.from_groups(n, groups)

    def holder():
        for bid, b in blocks.items():
            if 1 in b.elems:
                return bid
        return None

    run.path.append((0.0, snapshot()))
    run.tagged.append((0.0, 1.0, start_type))
    t = 0.0
    while True:
        ids = list(blocks)
        r = np.array([W[blocks[b].typ] + c[blocks[b].typ] * len(blocks[b].elems) for b in ids])
        total = r.sum()
        if total <= 0:
            break
        t += rng.exponential() / total
        if t >= horizon:
            break
        k = int(np.searchsorted(np.cumsum(r), rng.random() * total, side="right"))
        bid = ids[min(k, len(ids) - 1)]
        b = blocks[bid]
        mass_now = b.mass * math.exp(-c[b.typ] * (t - b.since))
        tagged_here = 1 in b.elems
        if rng.random() * (W[b.typ] + c[b.typ] * len(b.elems)) < W[b.typ]:
            a = int(np.searchsorted(cum[b.typ], rng.random() * W[b.typ], side="right"))
            a = min(a, len(model.atoms[b.typ]) - 1)
            part = model.atoms[b.typ][a][1]
            labels = _paintbox_labels(part, len(b.elems), rng)
            elems = np.array(b.elems)
            del blocks[bid]
            children = []
            for q, (s, ti) in enumerate(part.parts):
                members = elems[labels == q].tolist()
                children.append((mass_now * s, ti))
                if members:
                    blocks[next_id] = _Block(members, mass_now * s, ti, t)
                    next_id += 1
            dust.extend(elems[labels == -1].tolist())
            run.events.append(BlockEvent(t, bid, a, tuple(children)))
        else:
            e = b.elems[int(rng.integers(len(b.elems)))]
            b.elems.remove(e)
            dust.append(e)
            b.mass, b.since = mass_now, t
            if not b.elems:
                del blocks[bid]
            run.events.append(BlockEvent(t, bid, -1, ((0.0, NO_TYPE),)))
        run.path.append((t, snapshot()))
        if tagged_here:
            h = holder()
            if h is None:
                run.tagged.append((t, 0.0, NO_TYPE))
            else:
                hb = blocks[h]
                run.tagged.append((t, hb.mass * math.exp(-c[hb.typ] * (t - hb.since)), hb.typ))
    return run


# ---------------------------------------------------- mass-tree simulator


@dataclass
class MassForest:
    """Block genealogies of one or more independent runs, as flat arrays.

    Node ``k`` has ``parent[k]`` (``-1`` for a root), ``run[k]``, block
    ``mass[k]`` at birth, ``type[k]``, ``birth[k]`` and ``death[k]`` heights,
    the ``atom[k]`` used at its dislocation (``-1`` if none) and a
    ``censored[k]`` flag: frozen at the mass floor (``death = inf``) or still
    alive at the horizon (``death = inf``). A node with finite death and no
    children was reduced entirely to dust.
    """

    alpha: float
    mass_floor: float
    horizon: float
    n_runs: int
    parent: np.ndarray
    run: np.ndarray
    mass: np.ndarray
    type: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    atom: np.ndarray
    censored: np.ndarray
    erosion: np.ndarray = None

    def __len__(self):
        return self.parent.size

    def select(self, r):
        """Sub-forest of run ``r`` with node ids renumbered from 0."""
        idx = np.flatnonzero(self.run == r)
        remap = np.full(len(self), -1)
        remap[idx] = np.arange(idx.size)
        par = self.parent[idx]
        par = np.where(par >= 0, remap[np.maximum(par, 0)], -1)
        return MassForest(
            self.alpha, self.mass_floor, self.horizon, 1, par, np.zeros(idx.size, dtype=int),
            self.mass[idx], self.type[idx], self.birth[idx], self.death[idx], self.atom[idx],
            self.censored[idx], self.erosion,
        )

    def mass_at(self, t):
        """Mass of each node at time ``t`` (meaningful while alive)."""
        if self.erosion is None or not np.any(self.erosion):
            return self.mass.copy()
        return self.mass * np.exp(-self.erosion[self.type] * (t - self.birth))

    def alive_at(self, t):
        return (self.birth <= t) & (t < self.death)

    def front(self, t):
        """``(run, mass, type)`` arrays of the blocks alive at time ``t``."""
        a = self.alive_at(t)
        return self.run[a], self.mass_at(t)[a], self.type[a]

    def events(self):
        """Dislocations as :class:`BlockEvent` records sorted by time."""
        kids = {}
        for k, p in enumerate(self.parent):
            if p >= 0:
                kids.setdefault(int(p), []).append(k)
        out = []
        for k in np.flatnonzero(np.isfinite(self.death) & ~self.censored):
            ch = tuple((float(self.mass[c]), int(self.type[c])) for c in kids.get(int(k), []))
            out.append(BlockEvent(float(self.death[k]), int(k), int(self.atom[k]), ch))
        out.sort(key=lambda e: (e.time, e.parent))
        return out


def _atom_tables(model):
    """Flattened atom data: per-type cumulative weights and part arrays."""
    cum = [np.cumsum([w for w, _ in row]) if row else np.zeros(0) for row in model.atoms]
    offsets, counts, pm, pt = [], [], [], []
    for row in model.atoms:
        o, cnt = [], []
        for _, part in row:
            o.append(len(pm))
            cnt.append(len(part))
            pm.extend(part.masses.tolist())
            pt.extend(part.types.tolist())
        offsets.append(np.array(o, dtype=int))
        counts.append(np.array(cnt, dtype=int))
    return cum, offsets, counts, np.array(pm, dtype=float), np.array(pt, dtype=int)


def simulate_forest(model, alpha, start_type, n_runs, rng=None, mass_floor=None, horizon=None,
                    start_mass=1.0, max_nodes=50_000_000):
    """Simulate ``n_runs`` independent mass trees, generation by generation.

    Blocks are independent given their mass and type, so each generation is
    processed at once: a block of mass ``x`` and type ``j`` lives an
    ``Exp(x**alpha * nu_j(total))`` time, then splits by an atom chosen
    proportionally to weight; child masses are ``x`` times the atom masses.
    Blocks born at mass ``<= mass_floor`` are frozen (censored); blocks alive
    at ``horizon`` are censored there.

    Erosion is exact only for ``alpha == 0`` (mass decays as ``exp(-c t)``
    between splits) and is rejected otherwise.

    Raises:
        ParameterError: no stopping rule, ``alpha < 0`` with neither floor
            nor horizon, nonzero erosion with ``alpha != 0``, or a block of a
            type that never dislocates when no horizon is given.
    """
    alpha = float(alpha)
    if mass_floor is None and horizon is None:
        raise ParameterError("need a mass floor or a horizon to stop the simulation")
    if mass_floor is not None and not (0 < mass_floor < 1):
        raise ParameterError("mass floor must lie in (0, 1)")
    if horizon is not None and not horizon > 0:
        raise ParameterError("horizon must be positive")
    if alpha != 0 and np.any(model.erosion > 0):
        raise ParameterError("erosion with alpha != 0 is not supported by the mass-tree simulator")
    if not 0 <= start_type < model.K:
        raise ParameterError(f"start type {start_type} out of range")
    rng = np.random.default_rng(rng)
    floor = -1.0 if mass_floor is None else float(mass_floor)
    hz = math.inf if horizon is None else float(horizon)
    W = model.total_rates
    c = model.erosion
    cum, offsets, counts, pm, pt = _atom_tables(model)

    cols = {k: [] for k in ("parent", "run", "mass", "type", "birth", "death", "atom", "censored")}
    n_nodes = 0
    f_par = np.full(n_runs, -1)
    f_run = np.arange(n_runs)
    f_mass = np.full(n_runs, float(start_mass))
    f_type = np.full(n_runs, int(start_type))
    f_birth = np.zeros(n_runs)
    while f_par.size:
        m = f_par.size
        ids = n_nodes + np.arange(m)
        death = np.full(m, math.inf)
        atom = np.full(m, -1)
        censored = f_mass <= floor
        rate = W[f_type] * np.where(censored, 1.0, f_mass) ** alpha
        live = ~censored & (rate > 0)
        if horizon is None and np.any(~censored & (rate <= 0)):
            raise ParameterError("a block of a type with zero dislocation rate would live forever")
        life = np.full(m, math.inf)
        life[live] = rng.exponential(size=int(live.sum())) / rate[live]
        ends = f_birth + life
        over = ends >= hz
        censored |= over
        split = live & ~over
        death[split] = ends[split]
        sidx = np.flatnonzero(split)
        for j in np.unique(f_type[sidx]):
            sel = sidx[f_type[sidx] == j]
            a = np.searchsorted(cum[j], rng.random(sel.size) * W[j], side="right")
            atom[sel] = np.minimum(a, cum[j].size - 1)
        cols["parent"].append(f_par)
        cols["run"].append(f_run)
        cols["mass"].append(f_mass)
        cols["type"].append(f_type)
        cols["birth"].append(f_birth)
        cols["death"].append(death)
        cols["atom"].append(atom)
        cols["censored"].append(censored)
        n_nodes += m
        if n_nodes > max_nodes:
            raise ParameterError(f"simulation exceeded {max_nodes} nodes; raise the floor or shorten the horizon")
        if sidx.size == 0:
            break
        # children of every split block
        off = np.empty(sidx.size, dtype=int)
        cnt = np.empty(sidx.size, dtype=int)
        for j in np.unique(f_type[sidx]):
            msk = f_type[sidx] == j
            off[msk] = offsets[j][atom[sidx[msk]]]
            cnt[msk] = counts[j][atom[sidx[msk]]]
        rep = np.repeat(np.arange(sidx.size), cnt)
        within = np.arange(rep.size) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        part = off[rep] + within
        par_local = sidx[rep]
        decay = np.exp(-c[f_type[par_local]] * life[par_local]) if np.any(c) else 1.0
        f_mass = f_mass[par_local] * decay * pm[part]
        f_type = pt[part]
        f_birth = death[par_local]
        f_run = f_run[par_local]
        f_par = ids[par_local]

    arr = {k: np.concatenate(v) for k, v in cols.items()}
    return MassForest(
        alpha, mass_floor, hz, n_runs, arr["parent"].astype(int), arr["run"].astype(int),
        arr["mass"], arr["type"].astype(int), arr["birth"], arr["death"], arr["atom"].astype(int),
        arr["censored"].astype(bool), c.copy(),
    )


def simulate_mass_tree(model, alpha, start=(1.0, 0), mass_floor=None, horizon=None, rng=None):
    """One exact mass tree started from a block ``start = (mass, type)``."""
    mass, typ = start
    return simulate_forest(model, alpha, typ, 1, rng, mass_floor, horizon, start_mass=mass)


def time_change(forest, beta):
    """Apply the Lamperti change of index by ``beta`` to every block.

    Each block keeps its mass (no erosion) so its lifetime is multiplied by
    ``mass**(-beta)``; heights are then rebuilt along the genealogy. A forest
    simulated at index ``alpha`` becomes one at index ``alpha + beta``.
    """
    if forest.erosion is not None and np.any(forest.erosion):
        raise ParameterError("time change needs erosion-free blocks")
    life = np.where(np.isfinite(forest.death), forest.death - forest.birth, np.inf)
    life = life * forest.mass ** (-beta)
    birth = np.empty_like(forest.birth)
    death = np.empty_like(forest.death)
    for k in range(len(forest)):
        p = forest.parent[k]
        birth[k] = 0.0 if p < 0 else death[p]
        death[k] = birth[k] + life[k]
    # horizon censoring does not survive a time change
    return MassForest(
        forest.alpha + beta, forest.mass_floor, math.inf, forest.n_runs, forest.parent, forest.run,
        forest.mass, forest.type, birth, death, forest.atom, forest.censored, forest.erosion,
    )


# ----------------------------------------------------- tagged fragment


def tagged_bernstein(model):
    """Bernstein matrix of the tagged fragment, as a function of ``p``.

    ``Phi(p)[i, j] = c_i (p + 1) 1{i=j}
    + sum_atoms w (1{i=j} - sum_{parts of type j} s**(1+p))``.
    """
    K = model.K
    c = model.erosion

    def phi(p):
        M = np.diag(c * (p + 1))
        for i, row in enumerate(model.atoms):
            for w, part in row:
                M[i, i] += w
                M[i] -= w * s_pow_vector(part, 1 + p, K)
        return M

    return phi


def tagged_map_params(model, shift=0.0, b=None):
    """MAP whose Bernstein matrix is ``diag(b)^{-1} Phi_tag(p + shift) diag(b)``.

    ``shift = 0`` and ``b = None`` give the tagged fragment itself; with
    ``shift = p* - 1`` and the Malthus vector ``b`` it is the biased spine.
    A part ``(s, j)`` of an atom of type ``i`` with weight ``w`` becomes a
    jump of size ``-ln s`` at rate ``w s**(1+shift) b_j / b_i`` (a Levy atom
    when ``j = i``, a type change otherwise); erosion becomes drift ``c_i``.
    """
    K = model.K
    b = np.ones(K) if b is None else np.asarray(b, dtype=float)
    c = model.erosion
    lev = [dict() for _ in range(K)]
    cross = [[dict() for _ in range(K)] for _ in range(K)]
    kill = c * (shift + 1) + model.total_rates
    for i, row in enumerate(model.atoms):
        for w, part in row:
            for s, j in part.parts:
                r = w * s ** (1 + shift) * b[j] / b[i]
                kill[i] -= r
                x = -math.log(s)
                if j == i:
                    if x > 0:
                        lev[i][x] = lev[i].get(x, 0.0) + r
                else:
                    cross[i][j][x] = cross[i][j].get(x, 0.0) + r
    scale = max(1.0, float(model.total_rates.max()), float(c.max()))
    if np.any(kill < -1e-9 * scale):
        raise ParameterError(f"negative killing rate {float(kill.min())!r}: shift/bias invalid")
    kill = np.where(np.abs(kill) <= 1e-12 * scale, 0.0, np.maximum(kill, 0.0))
    G = np.zeros((K, K))
    laws = [[None] * K for _ in range(K)]
    for i in range(K):
        for j in range(K):
            if i != j and cross[i][j]:
                tot = sum(cross[i][j].values())
                G[i, j] = tot
                atoms = [(x, r / tot) for x, r in sorted(cross[i][j].items())]
                # renormalize rounding so probabilities sum to one
                fix = 1.0 - sum(q for _, q in atoms)
                atoms[-1] = (atoms[-1][0], atoms[-1][1] + fix)
                laws[i][j] = JumpLaw(tuple(atoms))
        G[i, i] = -G[i].sum()
    subs = [
        SubordinatorParams(kill=kill[i], drift=c[i], levy_atoms=tuple(sorted(lev[i].items())))
        for i in range(K)
    ]
    return MapParams(G, subs, laws, allow_degenerate=True)


# ------------------------------------------------------ size-bias check


@dataclass(frozen=True)
class SizeBiasReport:
    """Both sides of the size-biased pick identity, per final type.

    ``tagged`` estimates ``E_i[|Pi_1(t)|**p, i_1(t) = j]`` from the tagged
    MAP; ``blocks`` estimates ``E_i[sum_n |Pi_n(t)|**(1+p), i_n(t) = j]`` from
    the mass tree.
    """

    t: float
    p: float
    tagged: np.ndarray
    tagged_se: np.ndarray
    blocks: np.ndarray
    blocks_se: np.ndarray

    @property
    def gap_se(self):
        se = np.sqrt(self.tagged_se ** 2 + self.blocks_se ** 2)
        diff = self.tagged - self.blocks
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff == 0, 0.0, np.inf))


def size_bias_check(model, alpha, t, p, n_mc, start_type=0, seed=0, mass_floor=1e-3):
    """Monte Carlo of both sides of the size-bias identity at time ``t``.

    The left side runs the tagged MAP (Lamperti-transformed when
    ``alpha != 0``); the right side runs independent mass trees. For
    ``alpha < 0`` the trees are frozen at ``mass_floor``, which biases the
    right side by at most ``mass_floor**p``.
    """
    if p < 0:
        raise ParameterError("p must be >= 0")
    K = model.K
    ss = np.random.SeedSequence([int(seed), 7])
    g_left, g_right = (np.random.default_rng(s) for s in ss.spawn(2))
    if t == 0:
        e = np.zeros(K)
        e[start_type] = 1.0
        return SizeBiasReport(0.0, p, e, np.zeros(K), e.copy(), np.zeros(K))
    params = tagged_map_params(model)
    if alpha == 0:
        res = simulate_batch(
            params, start_type, n_mc, g_left, times=(t,))
    else:
        res = simulate_batch(
            params, start_type, n_mc, g_left, times=(t,), lamperti_alpha=alpha)
    x = res.positions_at[0]
    jt = res.types_at[0]
    with np.errstate(over="ignore"):
        val = np.where(np.isfinite(x), np.exp(-p * x), 0.0)
    left = np.array([np.mean(val * (jt == j)) for j in range(K)])
    left_se = np.array([np.std(val * (jt == j), ddof=1) for j in range(K)]) / math.sqrt(n_mc)

    floor = mass_floor if alpha < 0 else None
    forest = simulate_forest(model, alpha, start_type, n_mc, g_right, mass_floor=floor, horizon=t)
    run, mass, typ = forest.front(t)
    right_runs = np.zeros((K, n_mc))
    for j in range(K):
        sel = typ == j
        right_runs[j] = np.bincount(run[sel], weights=mass[sel] ** (1 + p), minlength=n_mc)
    right = right_runs.mean(axis=1)
    right_se = right_runs.std(axis=1, ddof=1) / math.sqrt(n_mc)
    return SizeBiasReport(float(t), float(p), left, left_se, right, right_se)
