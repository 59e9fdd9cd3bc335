"""Exact event-driven simulation of finite-activity MAPs.

Between events the position moves linearly with the current drift, so every
path is piecewise linear with upward jumps and the exponential functional,
Lamperti clocks and state at fixed times all have closed forms per segment.
There is no time discretization anywhere.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import NumericError, ParameterError, TruncationError
from .map_model import bernstein_matrix

KILLED = -1
TAIL_TOL = 1e-10
CHUNK = 4096


# ---------------------------------------------------------------- paths


@dataclass
class MapPath:
    """One trajectory of ``(xi, J)``.

    ``segments`` holds ``(start_time, duration, start_position, slope, type)``
    and ``jumps`` holds ``(time, size, cause)`` with cause ``"levy_atom"`` or
    ``"type_change"``. ``death_time`` is ``inf`` if the path was still alive
    when it was stopped at ``horizon``.
    """

    segments: list = field(default_factory=list)
    jumps: list = field(default_factory=list)
    death_time: float = math.inf
    final_type: int = KILLED
    horizon: float = math.inf
    min_drift: float = 0.0

    @property
    def dead(self):
        return math.isfinite(self.death_time)

    @property
    def end_time(self):
        return self.death_time if self.dead else self.horizon

    @property
    def final_position(self):
        """Position at the stopping time (left limit at death)."""
        t0, d, x0, c, _ = self.segments[-1]
        return x0 + c * d

    def _segment_at(self, t):
        if t < 0 or t > self.end_time or (self.dead and t >= self.death_time):
            return None
        for seg in self.segments:
            t0, d, x0, c, i = seg
            if t0 <= t < t0 + d or (t == t0 + d == self.end_time):
                return seg
        return self.segments[-1]

    def position_at(self, t):
        seg = self._segment_at(t)
        if seg is None:
            return math.inf
        t0, d, x0, c, i = seg
        return x0 + c * (t - t0)

    def type_at(self, t):
        seg = self._segment_at(t)
        return KILLED if seg is None else seg[4]


def _event_tables(params):
    """Per type: (total rate, cumulative rates, event kinds, payloads)."""
    G = params.generator
    tables = []
    for i, s in enumerate(params.subordinators):
        rates, kinds, payload = [], [], []
        for x, w in s.levy_atoms:
            rates.append(w)
            kinds.append(0)
            payload.append(x)
        for j in range(params.K):
            if j != i and G[i, j] > 0:
                rates.append(G[i, j])
                kinds.append(1)
                payload.append(j)
        if s.kill > 0:
            rates.append(s.kill)
            kinds.append(2)
            payload.append(0)
        rates = np.array(rates, dtype=float)
        tables.append(
            (float(rates.sum()), np.cumsum(rates), np.array(kinds, dtype=int), np.array(payload))
        )
    return tables


def _jump_tables(params):
    out = {}
    for i in range(params.K):
        for j in range(params.K):
            law = params.jump_laws[i][j]
            sizes = np.array([x for x, _ in law.atoms])
            cum = np.cumsum([q for _, q in law.atoms])
            cum[-1] = 1.0
            out[i, j] = (sizes, cum)
    return out


def _killing_reachable(params, start_type):
    G = params.generator
    seen, stack = {start_type}, [start_type]
    while stack:
        i = stack.pop()
        if params.subordinators[i].kill > 0:
            return True
        for j in np.flatnonzero(G[i] > 0):
            if int(j) not in seen and j != i:
                seen.add(int(j))
                stack.append(int(j))
    return False


def simulate_map_path(params, start_type, horizon=None, rng=None, start_position=0.0):
    """Simulate one exact path up to death or ``horizon``.

    Competing exponential clocks run in each type: Levy atoms at their rates,
    a type change at rate ``|lambda_ii|`` (the new type ``j`` drawn with
    probability proportional to ``lambda_ij``, and a jump drawn from
    ``B_ij``), and killing at rate ``kill``.

    Raises:
        ParameterError: no horizon and killing is unreachable from
            ``start_type``, so the path would be infinite.
    """
    params._check_type(start_type)
    if horizon is None:
        if not _killing_reachable(params, start_type):
            raise ParameterError("no horizon given and killing is unreachable: path would be infinite")
        horizon = math.inf
    elif not horizon > 0:
        raise ParameterError(f"horizon must be positive, got {horizon}")
    rng = np.random.default_rng(rng)
    tables = _event_tables(params)
    jtab = _jump_tables(params)
    drifts = params.drifts

    path = MapPath(horizon=horizon, min_drift=float(drifts.min()))
    t, x, i = 0.0, float(start_position), int(start_type)
    while True:
        rate, cum, kinds, payload = tables[i]
        dt = rng.exponential() / rate if rate > 0 else math.inf
        if t + dt >= horizon:
            path.segments.append((t, horizon - t, x, drifts[i], i))
            path.final_type = i
            return path
        path.segments.append((t, dt, x, drifts[i], i))
        t += dt
        x += drifts[i] * dt
        k = int(np.searchsorted(cum, rng.random() * rate, side="right"))
        k = min(k, len(kinds) - 1)
        kind = kinds[k]
        if kind == 0:
            size = float(payload[k])
            x += size
            path.jumps.append((t, size, "levy_atom"))
        elif kind == 1:
            j = int(payload[k])
            sizes, qcum = jtab[i, j]
            size = float(sizes[min(int(np.searchsorted(qcum, rng.random(), side="right")), len(sizes) - 1)])
            x += size
            path.jumps.append((t, size, "type_change"))
            i = j
        else:
            path.death_time = t
            path.final_type = KILLED
            return path


def _segment_integral(x0, c, d, a):
    """``int_0^d exp(-a (x0 + c u)) du`` in closed form."""
    if d == 0:
        return 0.0
    if c * a == 0:
        return d * math.exp(-a * x0)
    if math.isinf(d):
        return math.exp(-a * x0) / (a * c)
    return math.exp(-a * x0) * -math.expm1(-a * c * d) / (a * c)


def exponential_functional(path, a=1.0, tol=TAIL_TOL):
    """``int_0^T exp(-a xi_t) dt`` summed exactly over the segments.

    For a path still alive at its horizon the neglected tail is bounded by
    ``exp(-a xi_h) / (a * min drift)``, the minimum taken over all types;
    a bound above ``tol`` is an error.

    Raises:
        TruncationError: tail bound above ``tol``; ``bound`` carries it.
    """
    if not a > 0:
        raise ParameterError(f"scale must be positive, got {a}")
    total = math.fsum(_segment_integral(x0, c, d, a) for _, d, x0, c, _ in path.segments)
    if path.dead:
        return total
    if path.min_drift <= 0:
        bound = math.inf
    else:
        bound = math.exp(-a * path.final_position) / (a * path.min_drift)
    if bound > tol:
        raise TruncationError(f"undead path: tail bound {bound:.3e} exceeds {tol:.1e}", bound=bound)
    return total


# --------------------------------------------------------------- Lamperti


@dataclass
class LampertiPath:
    """Lamperti transform ``X_t = exp(-xi_{tau(t)})``, ``L_t = J_{tau(t)}``.

    ``clock[k]`` is the transformed time at which segment ``k`` starts.
    For ``alpha < 0`` the process is absorbed at ``(0, 0)`` from
    ``absorption_time`` on; type ``0`` is the usual placeholder for the absorbed state,
    returned as :data:`KILLED` to keep it distinct from real type 0.
    """

    path: MapPath
    alpha: float
    clock: np.ndarray
    absorption_time: float
    end_clock: float

    def at(self, t):
        """``(X_t, L_t)``; ``(0.0, KILLED)`` once absorbed.

        Raises:
            ParameterError: ``t`` lies beyond the transformed horizon of a
                path that was stopped alive.
        """
        if t >= self.absorption_time:
            return 0.0, KILLED
        if t > self.end_clock:
            raise ParameterError(f"t = {t} is beyond the simulated horizon ({self.end_clock})")
        k = int(np.searchsorted(self.clock, t, side="right")) - 1
        t0, d, x0, c, i = self.path.segments[k]
        s = t - self.clock[k]
        u = _clock_inverse(x0, c, s, self.alpha)
        u = min(u, d)
        return math.exp(-(x0 + c * u)), i


def _clock_integral(x0, c, d, alpha):
    """``int_0^d exp(alpha (x0 + c u)) du``."""
    if d == 0:
        return 0.0
    ac = alpha * c
    if ac == 0:
        return d * math.exp(alpha * x0)
    if math.isinf(d):
        return math.exp(alpha * x0) / -ac if ac < 0 else math.inf
    return math.exp(alpha * x0) * math.expm1(ac * d) / ac


def _clock_inverse(x0, c, s, alpha):
    ac = alpha * c
    if ac == 0:
        return s * math.exp(-alpha * x0)
    arg = s * ac * math.exp(-alpha * x0)
    if arg <= -1:
        return math.inf
    return math.log1p(arg) / ac


def lamperti_transform(path, alpha):
    """Time change turning the MAP path into a self-similar Markov path.

    The clock ``tau(t) = inf{u : int_0^u exp(alpha xi_r) dr > t}`` is inverted
    in closed form per segment. For ``alpha < 0`` and a dead path the
    absorption time equals the exponential functional at scale ``|alpha|``.
    """
    alpha = float(alpha)
    clocks = [0.0]
    for _, d, x0, c, _ in path.segments:
        clocks.append(clocks[-1] + _clock_integral(x0, c, d, alpha))
    clocks = np.array(clocks)
    absorption = float(clocks[-1]) if path.dead else math.inf
    return LampertiPath(path, alpha, clocks[:-1], absorption, float(clocks[-1]))


# ----------------------------------------------------------- batch engine


@dataclass
class BatchResult:
    """Vectorized simulation output for ``n`` independent paths."""

    times: tuple
    positions_at: np.ndarray
    types_at: np.ndarray
    death_time: np.ndarray
    final_position: np.ndarray
    final_type: np.ndarray
    functional: np.ndarray
    truncated: np.ndarray


def _tail_constant(params, a):
    drifts = params.drifts
    if np.all(drifts > 0):
        return 1.0 / (a * drifts.min())
    try:
        mean = np.linalg.solve(bernstein_matrix(params, a), np.ones(params.K))
    except np.linalg.LinAlgError:
        mean = None
    if mean is None or not np.all(np.isfinite(mean)) or np.any(mean <= 0):
        raise ParameterError("cannot bound the exponential-functional tail; give a horizon")
    return float(mean.max())


def _clock_step(x0, c, d, alpha):
    """Vectorized ``int_0^d exp(alpha (x0 + c u)) du``."""
    ac = alpha * c
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        safe = np.where(ac != 0, ac, 1.0)
        dd = np.where(np.isfinite(d), d, 0.0)
        finite = np.where(ac != 0, np.exp(alpha * x0) * np.expm1(ac * dd) / safe, dd * np.exp(alpha * x0))
        infinite = np.where(ac < 0, np.exp(alpha * x0) / -safe, np.inf)
    out = np.where(np.isfinite(d), finite, infinite)
    return np.where(d == 0, 0.0, out)


def _clock_inverse_vec(x0, c, s, alpha):
    ac = alpha * c
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        safe = np.where(ac != 0, ac, 1.0)
        arg = s * ac * np.exp(-alpha * x0)
        lin = s * np.exp(-alpha * x0)
        out = np.where(ac != 0, np.log1p(np.maximum(arg, -1.0)) / safe, lin)
    return out


def simulate_batch(params, start_type, n, rng=None, horizon=None, times=(), scale=1.0,
                   tail_tol=TAIL_TOL, start_position=0.0, lamperti_alpha=None):
    """Simulate ``n`` independent paths in lockstep.

    Each path runs until death, until ``horizon``, or (no horizon, no
    reachable killing) until the expected remaining exponential functional
    ``exp(-scale xi) * C`` drops below ``tail_tol``. ``C`` is ``1/(scale *
    min drift)`` when every drift is positive and ``max_i E_i[I]`` otherwise.

    ``positions_at[k]`` and ``types_at[k]`` give the state at ``times[k]``
    (``inf`` and :data:`KILLED` after death). With ``lamperti_alpha`` set,
    ``times`` are read on the Lamperti clock ``int_0^u exp(alpha xi_r) dr``
    instead, so ``exp(-positions_at)`` is the self-similar process at those
    times; a path stopped by the tail rule counts as absorbed.
    ``functional`` is the exponential functional at ``scale`` accumulated up
    to the stopping time.
    """
    params._check_type(start_type)
    rng = np.random.default_rng(rng)
    times = tuple(float(t) for t in times)
    reach_kill = _killing_reachable(params, start_type)
    lam = lamperti_alpha is not None
    if lam:
        if horizon is not None:
            raise ParameterError("horizon is implied by the Lamperti observation times")
        if not times:
            raise ParameterError("Lamperti mode needs observation times")
        horizon = math.inf
        t_last = max(times)
        tail = not reach_kill and lamperti_alpha < 0
    elif horizon is None:
        horizon = max(times) if times else math.inf
        tail = not reach_kill and not times
    else:
        if any(t > horizon for t in times):
            raise ParameterError("observation time beyond horizon")
        tail = False
    if horizon == math.inf and not tail and not reach_kill and not (lam and lamperti_alpha >= 0):
        raise ParameterError("no horizon given and killing is unreachable")
    C = _tail_constant(params, scale if not lam else abs(lamperti_alpha)) if tail else 0.0
    tail_scale = scale if not lam else abs(lamperti_alpha)

    tables = _event_tables(params)
    jtab = _jump_tables(params)
    drifts = params.drifts
    rates = np.array([tb[0] for tb in tables])

    t = np.zeros(n)
    clk = np.zeros(n)
    x = np.full(n, float(start_position))
    typ = np.full(n, int(start_type))
    death = np.full(n, math.inf)
    func = np.zeros(n)
    trunc = np.zeros(n, dtype=bool)
    pos_at = np.full((len(times), n), math.inf)
    typ_at = np.full((len(times), n), KILLED)
    active = np.ones(n, dtype=bool)

    while active.any():
        idx = np.flatnonzero(active)
        if tail:
            done = np.exp(-tail_scale * x[idx]) * C <= tail_tol
            if done.any():
                trunc[idx[done]] = True
                active[idx[done]] = False
                idx = idx[~done]
                if idx.size == 0:
                    break
        ti, xi, ci = t[idx], x[idx], drifts[typ[idx]]
        r = rates[typ[idx]]
        with np.errstate(divide="ignore"):
            dt = np.where(r > 0, rng.exponential(size=idx.size) / np.where(r > 0, r, 1.0), math.inf)
        t_next = ti + dt
        end = np.minimum(t_next, horizon)
        d = end - ti
        if lam:
            ck = clk[idx]
            dclk = _clock_step(xi, ci, d, lamperti_alpha)
            for k, tau in enumerate(times):
                hit = (ck <= tau) & (tau < ck + dclk)
                if hit.any():
                    h = idx[hit]
                    u = np.minimum(_clock_inverse_vec(xi[hit], ci[hit], tau - ck[hit], lamperti_alpha), d[hit])
                    pos_at[k, h] = xi[hit] + ci[hit] * u
                    typ_at[k, h] = typ[h]
            clk[idx] = ck + dclk
        else:
            for k, tau in enumerate(times):
                hit = ((ti <= tau) & (tau < end)) | ((tau == end) & (end == horizon))
                if hit.any():
                    h = idx[hit]
                    pos_at[k, h] = xi[hit] + ci[hit] * (tau - ti[hit])
                    typ_at[k, h] = typ[h]
        ac = scale * ci
        with np.errstate(over="ignore", invalid="ignore"):
            seg = np.where(
                ac > 0,
                np.exp(-scale * xi) * -np.expm1(-ac * d) / np.where(ac > 0, ac, 1.0),
                d * np.exp(-scale * xi),
            )
        seg = np.where(d == 0, 0.0, seg)
        func[idx] += seg
        x[idx] = xi + ci * np.where(np.isfinite(d), d, 0.0)
        t[idx] = end
        stop = t_next >= horizon
        if lam:
            stop |= clk[idx] > t_last
        active[idx[stop]] = False
        ev = idx[~stop]
        if ev.size == 0:
            continue
        u = rng.random(ev.size)
        for i in np.unique(typ[ev]):
            mask = typ[ev] == i
            sel = ev[mask]
            rate, cum, kinds, payload = tables[i]
            k = np.minimum(np.searchsorted(cum, u[mask] * rate, side="right"), len(kinds) - 1)
            kind = kinds[k]
            lev = kind == 0
            x[sel[lev]] += payload[k[lev]].astype(float)
            kil = kind == 2
            death[sel[kil]] = t[sel[kil]]
            active[sel[kil]] = False
            chg = np.flatnonzero(kind == 1)
            if chg.size:
                targets = payload[k[chg]].astype(int)
                for j in np.unique(targets):
                    m = sel[chg[targets == j]]
                    sizes, qcum = jtab[i, j]
                    if sizes.size == 1:
                        x[m] += sizes[0]
                    else:
                        pick = np.minimum(np.searchsorted(qcum, rng.random(m.size), side="right"), sizes.size - 1)
                        x[m] += sizes[pick]
                    typ[m] = j
    final_type = np.where(np.isfinite(death), KILLED, typ)
    return BatchResult(times, pos_at, typ_at, death, x, final_type, func, trunc)


# ------------------------------------------------------------ Monte Carlo


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int
    seed: int

    @classmethod
    def from_samples(cls, samples, seed=0):
        x = np.asarray(samples, dtype=float)
        n = x.size
        if n < 2:
            raise ParameterError("need at least two samples")
        return cls(float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)), n, int(seed))


def _combine(a, b):
    """Merge ``(n, mean, M2)`` summaries (Chan et al. pairwise update)."""
    na, ma, sa = a
    nb, mb, sb = b
    if na == 0:
        return b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * nb / n, sa + sb + delta * delta * na * nb / n


def chunk_streams(seed, n, chunk=CHUNK, key=()):
    """Independent generators for consecutive chunks of ``n`` replicas.

    Stream ``k`` is keyed by ``(seed, *key, k)`` so the result does not depend
    on how chunks are distributed over workers.
    """
    n_chunks = max(1, math.ceil(n / chunk))
    children = np.random.SeedSequence([int(seed), *map(int, key)]).spawn(n_chunks)
    for k, ss in enumerate(children):
        size = min(chunk, n - k * chunk)
        yield k * chunk, size, np.random.default_rng(ss)


def _run_chunk(args):
    sampler, start, size, rng, vectorized = args
    if vectorized:
        try:
            x = np.asarray(sampler(rng, size), dtype=float)
        except Exception as exc:
            raise RuntimeError(f"sampler failed in replicas [{start}, {start + size})") from exc
        if x.shape != (size,):
            raise RuntimeError(f"vectorized sampler returned shape {x.shape}, expected ({size},)")
    else:
        x = np.empty(size)
        for r in range(size):
            try:
                x[r] = sampler(rng)
            except Exception as exc:
                raise RuntimeError(f"sampler failed at replica {start + r}") from exc
    if not np.all(np.isfinite(x)):
        bad = start + int(np.flatnonzero(~np.isfinite(x))[0])
        raise NumericError(f"sampler returned a non-finite value at replica {bad}")
    return size, float(x.mean()), float(((x - x.mean()) ** 2).sum())


def mc_estimate(sampler, n, seed, workers=1, vectorized=False, chunk=CHUNK):
    """Plain Monte Carlo mean and standard error of ``sampler``.

    ``sampler(rng)`` returns one replica, or with ``vectorized=True``
    ``sampler(rng, m)`` returns ``m`` replicas. Replicas are split in chunks
    with their own streams; chunk summaries are merged in chunk order, so the
    estimate is bit-for-bit identical for any ``workers``.
    """
    if n < 2:
        raise ParameterError("mc_estimate needs n >= 2")
    jobs = [(sampler, s, m, g, vectorized) for s, m, g in chunk_streams(seed, n, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    acc = (0, 0.0, 0.0)
    for p in parts:
        acc = _combine(acc, p)
    total, mean, m2 = acc
    var = m2 / (total - 1)
    return McEstimate(mean, math.sqrt(max(var, 0.0) / total), total, int(seed))


def sample_functional(params, start_type, n, seed, scale=1.0, key=(), chunk=1 << 16):
    """``n`` exact samples of the exponential functional at ``scale``.

    Paths run to death or to the tail-bound stopping rule of
    :func:`simulate_batch`; reproducible from ``(seed, key)``.
    """
    out = np.empty(n)
    for start, size, g in chunk_streams(seed, n, chunk, key=(*key, start_type)):
        out[start:start + size] = simulate_batch(params, start_type, size, g, scale=scale).functional
    return out
