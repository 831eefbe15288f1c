"""Randomized graph-with-order laboratory.

Distance-indexed edge-probability sequences, seeded reproducible
sampling, Monte Carlo sentence-probability estimation with Wilson
intervals, the one-bit subset perturbation distributions and their exact
laws, worst-case agreement rates of summed theories under perturbation,
cutpoint selection with summable tails, and the coupled two-size sampler
whose two readings are distributed as consecutive-size random models.

Randomness is counter-based: every draw site derives its own Philox
substream from (seed, site labels), so results do not depend on how work
is split across workers.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats
from scipy.special import zeta as hurwitz_zeta

from . import logic
from .structures import GRAPH_ORDER, Structure, Vocabulary
from .theory import Theory, TheoryError, th_of_model
from .compose import oplus


class RandLabError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Substreams

def substream(seed: int, *labels) -> np.random.Generator:
    """Independent generator for a draw site, stable under parallel scheduling."""
    digest = hashlib.blake2b(repr((seed,) + labels).encode(), digest_size=16).digest()
    entropy = int.from_bytes(digest, "big")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


# ---------------------------------------------------------------------------
# Edge-probability sequences

@dataclass(frozen=True)
class PSeq:
    """p_i = edge probability at order distance i; p_0 = 0 and sum p_i < inf.

    Families: geometric c*q**i, power c*i**-s, finite explicit list for
    i = 1..len (zero beyond).
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.family == "geometric":
            c, q = self.params
            if not (0 <= c and 0 < q < 1 and 0 <= c * q <= 1):
                raise RandLabError("geometric needs 0<q<1 and 0 <= c*q <= 1")
        elif self.family == "power":
            c, s = self.params
            if not (0 <= c <= 1 and s > 1):
                raise RandLabError("power needs 0<=c<=1 and s>1")
        elif self.family == "finite":
            if any(not (0 <= v <= 1) for v in self.params):
                raise RandLabError("finite entries must lie in [0,1]")
        else:
            raise RandLabError("unknown family %r" % self.family)

    def prob(self, i: int) -> float:
        if i <= 0:
            return 0.0
        if self.family == "geometric":
            c, q = self.params
            return min(1.0, c * q ** i)
        if self.family == "power":
            c, s = self.params
            return min(1.0, c * i ** (-s))
        return self.params[i - 1] if i <= len(self.params) else 0.0

    def tail(self, t: int) -> float:
        """Sum of p_i for i >= t (t >= 1), in closed form per family."""
        t = max(t, 1)
        if self.family == "geometric":
            c, q = self.params
            return c * q ** t / (1 - q)
        if self.family == "power":
            c, s = self.params
            return c * float(hurwitz_zeta(s, t))
        return float(sum(self.params[t - 1:]))

    def total(self) -> float:
        return self.tail(1)

    def spec(self) -> str:
        return "%s:%s" % (self.family, ",".join(repr(v) for v in self.params))


def geometric(c: float, q: float) -> PSeq:
    return PSeq("geometric", (c, q))


def power(c: float, s: float) -> PSeq:
    return PSeq("power", (c, s))


def finite(values: Sequence[float]) -> PSeq:
    return PSeq("finite", tuple(values))


def parse_pseq(text: str) -> PSeq:
    try:
        family, _, args = text.partition(":")
        params = tuple(float(v) for v in args.split(",")) if args else ()
        return PSeq(family, params)
    except (ValueError, IndexError) as exc:
        raise RandLabError("bad pseq %r: %s" % (text, exc)) from exc


# ---------------------------------------------------------------------------
# Sampling and estimation

def sample_graph_order(p: PSeq, n: int, seed: int, sample_index: int = 0) -> Structure:
    """(n, <, R): each pair i<j is an edge independently with probability
    p_(j-i).  Pairs are drawn by distance then position."""
    edges = _sample_edges(p, n, seed, sample_index)
    rel = set()
    for i, j in edges:
        rel.add((i, j))
        rel.add((j, i))
    return Structure(GRAPH_ORDER, n, {"R": frozenset(rel)})


def _sample_edges(p: PSeq, n: int, seed: int, sample_index: int) -> list[tuple[int, int]]:
    rng = substream(seed, "graph", sample_index)
    edges = []
    for d in range(1, n):
        u = rng.random(n - d)
        pd = p.prob(d)
        if pd > 0:
            for i in np.nonzero(u < pd)[0]:
                edges.append((int(i), int(i) + d))
    return edges


def wilson_interval(successes: int, samples: int, z: float = 1.959963984540054):
    if samples == 0:
        return (0.0, 1.0)
    phat = successes / samples
    denom = 1 + z * z / samples
    center = (phat + z * z / (2 * samples)) / denom
    half = z * math.sqrt(phat * (1 - phat) / samples + z * z / (4 * samples * samples)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == samples else min(1.0, center + half)
    return (lo, hi)


@dataclass(frozen=True)
class EstimationResult:
    sentence: str
    n: int
    samples: int
    successes: int
    estimate: float
    ci_low: float
    ci_high: float
    seed: int

    def __post_init__(self):
        assert 0 <= self.successes <= self.samples


def _count_chunk(args) -> int:
    pseq_spec, formula_text, n, seed, start, stop = args
    p = parse_pseq(pseq_spec)
    f = logic.parse(formula_text, GRAPH_ORDER)
    successes = 0
    for i in range(start, stop):
        m = sample_graph_order(p, n, seed, i)
        if logic.eval_formula(m, f):
            successes += 1
    return successes


def estimate_prob(p: PSeq, n: int, f: logic.Formula, samples: int, seed: int,
                  workers: int = 1, sentence_id: str | None = None) -> EstimationResult:
    """Monte Carlo estimate of the probability that a sampled (n,<,R)
    satisfies the sentence; reproducible per (seed, sample index)."""
    if not logic.is_sentence(f):
        raise RandLabError("estimate_prob needs a sentence")
    if samples < 1:
        raise RandLabError("need at least one sample")
    text = logic.pretty(f)
    chunks = _chunk_ranges(samples, workers)
    args = [(p.spec(), text, n, seed, a, b) for a, b in chunks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            successes = sum(pool.map(_count_chunk, args))
    else:
        successes = sum(_count_chunk(a) for a in args)
    lo, hi = wilson_interval(successes, samples)
    return EstimationResult(sentence_id or text, n, samples, successes,
                            successes / samples, lo, hi, seed)


def _chunk_ranges(total: int, workers: int) -> list[tuple[int, int]]:
    parts = max(1, workers)
    step = (total + parts - 1) // parts
    return [(a, min(a + step, total)) for a in range(0, total, step)]


@dataclass
class SweepRow:
    result: EstimationResult
    diff: float | None = None       # estimate at this n minus at previous n
    diff_ci: float | None = None    # half-width by independent-proportions normal approx


def vw_sweep(p: PSeq, f: logic.Formula, n_range: Sequence[int], samples: int,
             seed: int, workers: int = 1, sentence_id: str | None = None) -> list[SweepRow]:
    rows = [SweepRow(estimate_prob(p, n, f, samples, seed, workers, sentence_id))
            for n in n_range]
    z = 1.959963984540054
    for prev, cur in zip(rows, rows[1:]):
        a, b = prev.result, cur.result
        var = (a.estimate * (1 - a.estimate) / a.samples
               + b.estimate * (1 - b.estimate) / b.samples)
        cur.diff = b.estimate - a.estimate
        cur.diff_ci = z * math.sqrt(var)
    return rows


ESTIMATE_FIELDS = ["sentence", "n", "samples", "successes", "estimate",
                   "ci_low", "ci_high", "seed"]


def write_estimates_csv(results: Iterable[EstimationResult], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ESTIMATE_FIELDS)
        for r in results:
            w.writerow([r.sentence, r.n, r.samples, r.successes,
                        "%.6f" % r.estimate, "%.6f" % r.ci_low, "%.6f" % r.ci_high, r.seed])


def write_sweep_csv(rows: Sequence[SweepRow], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ESTIMATE_FIELDS + ["diff", "diff_ci"])
        for row in rows:
            r = row.result
            w.writerow([r.sentence, r.n, r.samples, r.successes,
                        "%.6f" % r.estimate, "%.6f" % r.ci_low, "%.6f" % r.ci_high,
                        r.seed, "", ""])
        for row in rows:
            if row.diff is None:
                continue
            r = row.result
            w.writerow([r.sentence, r.n, "", "", "", "", "", r.seed,
                        "%.6f" % row.diff, "%.6f" % row.diff_ci])


def load_experiment_config(path: str):
    import json
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    p = PSeq(data["pseq"]["family"], tuple(data["pseq"]["params"]))
    f = logic.parse(data["sentence"], GRAPH_ORDER)
    lo, hi = data["n_range"]
    return p, f, range(lo, hi + 1), data["samples"], data["seed"]


# ---------------------------------------------------------------------------
# One-bit perturbation pairs

@dataclass(frozen=True)
class SprPair:
    ground_i: tuple[int, ...]
    ground_j: tuple[int, ...]
    q_no: frozenset[int]
    q_yes: frozenset[int]

    def __post_init__(self):
        i, j = set(self.ground_i), set(self.ground_j)
        if not j <= i:
            raise RandLabError("J must be a subset of I")
        if self.q_no - j != self.q_yes - j:
            raise RandLabError("the pair may differ inside J only")
        if len(self.q_no ^ self.q_yes) != 1:
            raise RandLabError("the pair must differ in exactly one element")


def sample_spr(I: Sequence[int], J: Sequence[int], mode: str, seed: int,
               draw_index: int = 0) -> SprPair:
    """Draw from the one-bit perturbation law: a uniform subset plus a
    uniform flip position in J; "npr" rejects draws that would remove."""
    if mode not in ("spr", "npr"):
        raise RandLabError("mode must be spr or npr")
    I = tuple(sorted(I))
    J = tuple(sorted(J))
    if not J:
        raise RandLabError("J must be nonempty")
    rng = substream(seed, "spr", draw_index)
    while True:
        q_no = frozenset(x for x in I if rng.random() < 0.5)
        s = J[int(rng.integers(len(J)))]
        if mode == "npr" and s in q_no:
            continue
        q_yes = q_no ^ {s}
        return SprPair(I, J, q_no, q_yes)


def spr_law(I: Sequence[int], J: Sequence[int], mode: str) -> dict:
    """Exact law of sample_spr as rationals, by enumerating the procedure."""
    I = tuple(sorted(I))
    J = tuple(sorted(J))
    out: dict[tuple[frozenset, frozenset], Fraction] = {}
    outcomes = []
    for bits in itertools.product((False, True), repeat=len(I)):
        q_no = frozenset(x for x, b in zip(I, bits) if b)
        for s in J:
            if mode == "npr" and s in q_no:
                continue
            outcomes.append((q_no, q_no ^ {s}))
    weight = Fraction(1, len(outcomes)) if mode == "npr" else \
        Fraction(1, 2 ** len(I) * len(J))
    for pair in outcomes:
        out[pair] = out.get(pair, Fraction(0)) + weight
    return out


# ---------------------------------------------------------------------------
# Perturbation sensitivity of summed theories

def _fold_with_flip(selection: list[Theory], flip_pos: int,
                    flipped: Theory) -> tuple[Theory, Theory]:
    """Theories of the fold under the base selection and with one position
    replaced; prefix and suffix folds are shared, so the cost is linear."""
    k = len(selection)
    pre = None
    for i in range(flip_pos):
        pre = selection[i] if pre is None else oplus(pre, selection[i])
    post = None
    for i in range(k - 1, flip_pos, -1):
        post = selection[i] if post is None else oplus(selection[i], post)
    return (_combine(pre, selection[flip_pos], post),
            _combine(pre, flipped, post))


def claim33_estimate(pairs: Sequence[tuple[Theory, Theory]], d: int,
                     trials: int, seed: int) -> float:
    """Frequency, over one-bit perturbations of a uniform selector set, of
    the summed theory changing."""
    k = len(pairs)
    for t_no, t_yes in pairs:
        if t_no.depth != d or t_yes.depth != d:
            raise TheoryError("summand theories must have depth %d" % d)
        if t_no.arity or t_yes.arity:
            raise TheoryError("summand theories must be sentence theories")
    rng = substream(seed, "claim33")
    disagree = 0
    for _ in range(trials):
        bits = rng.random(k) < 0.5
        s = int(rng.integers(k))
        selection = [pairs[i][1] if bits[i] else pairs[i][0] for i in range(k)]
        flipped = pairs[s][0] if bits[s] else pairs[s][1]
        base_total, flip_total = _fold_with_flip(selection, s, flipped)
        if base_total is not flip_total:
            disagree += 1
    return disagree / trials


# ---------------------------------------------------------------------------
# Exact worst-case agreement rate

@dataclass(frozen=True)
class ZetaResult:
    k: int
    d: int
    zeta: Fraction         # 1 - max P(differ | flip position among the k): always in [0,1]
    zeta_scaled: Fraction  # 1 - max (r/k) * P(differ): the raw-normalization variant
    worst: tuple = ()


def exact_zeta(k: int, d: int, models: Sequence[Structure],
               r_max: int | None = None, guard: int = 2_000_000) -> ZetaResult:
    """Exhaustive enumeration over summand assignments from the alphabet of
    model theories, with exactly k disagreeing positions, of the exact
    probability that a one-bit perturbation changes the summed theory.

    The supremum is alphabet-relative; for pure linear orders with the
    alphabet of all theories of sizes up to 2**d it is complete because
    larger orders collapse onto that range.
    """
    if k < 1:
        raise RandLabError("k must be positive")
    alphabet = sorted({th_of_model(m, d) for m in models}, key=lambda t: t._id)
    if not alphabet:
        raise RandLabError("empty alphabet")
    r_cap = 2 * k + 1 if r_max is None else r_max
    disagreeing = [(a, b) for a in alphabet for b in alphabet if a is not b]
    best_scaled = Fraction(0)
    best_cond = Fraction(0)
    worst = ()
    work = 0
    for r in range(k, r_cap + 1):
        for j_positions in itertools.combinations(range(r), k):
            j_set = set(j_positions)
            free_positions = [i for i in range(r) if i not in j_set]
            for j_choice in itertools.product(disagreeing, repeat=k):
                for free_choice in itertools.product(alphabet, repeat=len(free_positions)):
                    work += 2 ** r * k
                    if work > guard:
                        raise RandLabError("enumeration guard exceeded")
                    config: list[tuple[Theory, Theory]] = [None] * r
                    for pos, pair in zip(j_positions, j_choice):
                        config[pos] = pair
                    for pos, t in zip(free_positions, free_choice):
                        config[pos] = (t, t)
                    count = _count_disagreements(config, j_positions)
                    prob = Fraction(count, 2 ** r * k)
                    if prob > best_cond:
                        best_cond = prob
                        worst = (r, j_positions, tuple(t._id for pair in config for t in pair))
                    best_scaled = max(best_scaled, Fraction(r, k) * prob)
    return ZetaResult(k, d, 1 - best_cond, 1 - best_scaled, worst)


def _count_disagreements(config: Sequence[tuple[Theory, Theory]],
                         j_positions: Sequence[int]) -> int:
    r = len(config)
    count = 0
    for bits in itertools.product((0, 1), repeat=r):
        selection = [config[i][bits[i]] for i in range(r)]
        prefixes = [None] * (r + 1)
        for i in range(r):
            prefixes[i + 1] = selection[i] if prefixes[i] is None \
                else oplus(prefixes[i], selection[i])
        suffixes = [None] * (r + 1)
        for i in range(r - 1, -1, -1):
            suffixes[i] = selection[i] if suffixes[i + 1] is None \
                else oplus(selection[i], suffixes[i + 1])
        for s in j_positions:
            flipped = config[s][1 - bits[s]]
            base = _combine(prefixes[s], selection[s], suffixes[s + 1])
            alt = _combine(prefixes[s], flipped, suffixes[s + 1])
            if base is not alt:
                count += 1
    return count


def _combine(pre, mid, post):
    acc = mid if pre is None else oplus(pre, mid)
    return acc if post is None else oplus(acc, post)


# ---------------------------------------------------------------------------
# Bound calculators

def zeta_lower(k0: int) -> Fraction:
    """Agreement-rate lower bound 1/(k0 * 2**k0) at the Ramsey-scale size."""
    if k0 < 1:
        raise RandLabError("k0 must be positive")
    return Fraction(1, k0 * 2 ** k0)


def xi_37(xi_k: Fraction, ell: int, xi_table: Sequence[Fraction]) -> Fraction:
    """Recursive disagreement bound: xi_(k*ell) <= xi_k * sum over j < ell of
    C(ell-1, j) xi_k^j (1-xi_k)^(ell-1-j) xi_j."""
    xi_k = Fraction(xi_k)
    if not (0 <= xi_k <= 1):
        raise RandLabError("xi_k must lie in [0,1]")
    if ell < 1 or len(xi_table) < ell:
        raise RandLabError("need xi_j for all j < ell")
    total = Fraction(0)
    for j in range(ell):
        xi_j = Fraction(xi_table[j])
        if not (0 <= xi_j <= 1):
            raise RandLabError("xi_j must lie in [0,1]")
        total += (math.comb(ell - 1, j) * xi_k ** j * (1 - xi_k) ** (ell - 1 - j)) * xi_j
    return xi_k * total


def xi_38(xi_k: Fraction, xi_j0: Fraction, ell: int | None = None,
          j0: int | None = None) -> Fraction:
    """Halving bound xi_(k*ell) <= xi_k (1 + xi_j0) / 2, valid for j0 <= ell*xi_k."""
    xi_k, xi_j0 = Fraction(xi_k), Fraction(xi_j0)
    if not (0 <= xi_k <= 1 and 0 <= xi_j0 <= 1):
        raise RandLabError("xi values must lie in [0,1]")
    if ell is not None and j0 is not None and j0 > ell * xi_k:
        raise RandLabError("the bound needs j0 <= ell * xi_k")
    return xi_k * (1 + xi_j0) / 2


def ramsey_upper(c: int, d: int) -> int:
    """Upper bound for the pair-Ramsey number forcing a monochromatic set of
    size 3**(d+8) with c**2 colours: with m colours and target t, the greedy
    pivot argument gives R <= m**(m*(t-2)+1)."""
    if c < 1 or d < 0:
        raise RandLabError("need c >= 1 and d >= 0")
    m = c * c
    t = 3 ** (d + 8)
    if m == 1:
        return t
    return m ** (m * (t - 2) + 1)


# ---------------------------------------------------------------------------
# Cutpoints

@dataclass(frozen=True)
class CutPoints:
    points: tuple[int, ...]
    epsilon: float

    def __post_init__(self):
        if list(self.points) != sorted(set(self.points)):
            raise RandLabError("cutpoints must be strictly increasing")


def gap_sum(p: PSeq, lo: int, hi: int) -> float:
    """Sum of p_(j-i) over i <= lo+1 and j >= hi-1 (j > i): the probability
    bound for an edge crossing the widened gap."""
    return sum(p.tail(max(hi - 1 - i, 1)) for i in range(lo + 2))


def choose_cutpoints(p: PSeq, epsilon: float, k: int) -> CutPoints:
    """Greedy minimal cutpoints: the r-th gap's widened crossing bound stays
    below epsilon / 2**(r+2).  Terminates since the tails are summable."""
    if epsilon <= 0:
        raise RandLabError("epsilon must be positive")
    points = [0]
    for r in range(k):
        m = points[-1] + 1
        while gap_sum(p, points[-1], m) >= epsilon / 2 ** (r + 2):
            m += 1
        points.append(m)
    return CutPoints(tuple(points), epsilon)


# ---------------------------------------------------------------------------
# The coupled two-size sampler

@dataclass
class CoupledSample:
    n: int
    n_star: int
    k_star: int
    cutpoints: tuple[int, ...]
    i_points: tuple[int, ...]
    j_points: tuple[int, ...]
    q0: frozenset[int]
    q1: frozenset[int]
    base: Structure             # bookkeeping structure with R, R1, R2, P
    m0: Structure               # distributed as the size-(n+1) random model
    m1: Structure               # distributed as the size-n random model
    m_q0: Structure             # the no-lazy-edges readings
    m_q1: Structure
    npr_rejections: int
    size_rejections: int
    capped: bool


def _pair_class(i: int, j: int, cutpoints: Sequence[int], i_set: frozenset[int]):
    """("lazy", None) | ("normal", None) | ("drunkard", cutpoint)"""
    for r in range(len(cutpoints) - 1):
        if i <= cutpoints[r] + 1 and j >= cutpoints[r + 1] - 1:
            return ("lazy", None)
    spanned = [c for c in i_set if i <= c <= j]
    if not spanned:
        return ("normal", None)
    return ("drunkard", spanned[0])


def drunkard_layout(k_star: int, d_theta: int, cutpoints: Sequence[int]):
    stride = 3 ** d_theta + 1
    need = 2 * k_star * stride
    if len(cutpoints) < need:
        raise RandLabError("need at least %d cutpoints for k*=%d, d=%d"
                           % (need, k_star, d_theta))
    i_points = tuple(cutpoints[t] for t in range(need))
    j_points = tuple(cutpoints[stride * t] for t in range(1, 2 * k_star))
    return i_points, j_points


def drunkard_sample(p: PSeq, n: int, k_star: int, d_theta: int, epsilon: float,
                    seed: int, cutpoints: Sequence[int] | None = None,
                    draw_index: int = 0, max_attempts: int = 10_000) -> CoupledSample:
    """One draw of the coupled sampler on n* = n + k* + 1 points.

    Pairs crossing a widened cutpoint gap are forced non-edge; pairs
    spanning exactly one index cutpoint flip two coins (one at each of the
    two distances they may end up at); all other pairs flip one coin.  Two
    selector sets of sizes k* and k*+1 remove cutpoints, producing two
    readings whose sizes differ by one and whose laws match the direct
    sampler exactly.
    """
    if cutpoints is None:
        stride = 3 ** d_theta + 1
        k = (2 * k_star + 2) * stride
        cp = choose_cutpoints(p, epsilon, k)
        if n <= cp.points[-1]:
            raise RandLabError("n must exceed the last cutpoint %d" % cp.points[-1])
        cutpoints = cp.points
    cutpoints = tuple(cutpoints)
    n_star = n + k_star + 1
    i_points, j_points = drunkard_layout(k_star, d_theta, cutpoints)
    if any(c >= n_star for c in j_points):
        raise RandLabError("selector cutpoints must lie inside the universe")
    i_set = frozenset(i_points)
    j_d = j_points[:max(0, k_star - 1)]
    j_u = j_points[max(0, k_star - 1):]

    # classify pairs and flip the base coins
    rng = substream(seed, "coins", draw_index)
    classes: dict[tuple[int, int], tuple] = {}
    e: dict[tuple[int, int], bool] = {}
    e1: dict[tuple[int, int], bool] = {}
    e2: dict[tuple[int, int], bool] = {}
    for i in range(n_star):
        for j in range(i + 1, n_star):
            cls = _pair_class(i, j, cutpoints, i_set)
            classes[(i, j)] = cls
            if cls[0] == "normal":
                e[(i, j)] = bool(rng.random() < p.prob(j - i))
            elif cls[0] == "drunkard":
                e1[(i, j)] = bool(rng.random() < p.prob(j - i - 1))
                e2[(i, j)] = bool(rng.random() < p.prob(j - i))

    # selector draws
    npr_rejections = 0
    size_rejections = 0
    capped = False
    attempt = 0
    while True:
        if attempt >= max_attempts:
            raise RandLabError("selector drawing did not stabilize")
        rng_mu = substream(seed, "mu", draw_index, attempt)
        attempt += 1
        q_u_no = frozenset(x for x in j_u if rng_mu.random() < 0.5)
        s = j_u[int(rng_mu.integers(len(j_u)))]
        if s in q_u_no:
            npr_rejections += 1
            continue
        q_u_yes = q_u_no | {s}
        required = k_star + 1 - len(q_u_yes)
        if required > len(j_d):
            if len(j_d) > 0:
                size_rejections += 1
                continue
            capped = True
            required = 0
        q_d = frozenset(int(x) for x in
                        rng_mu.choice(np.array(j_d, dtype=int), size=required,
                                      replace=False)) if required else frozenset()
        q1 = q_d | q_u_yes
        q0 = q_d | q_u_no
        break

    # lazy fills and the two readings
    def reading(label: int, q: frozenset[int], with_lazy: bool) -> Structure:
        universe = [x for x in range(n_star) if x not in q]
        rank = {x: idx for idx, x in enumerate(universe)}
        rng_lazy = substream(seed, "lazy", label, draw_index)
        rel = set()
        for i in universe:
            for j in universe:
                if i >= j:
                    continue
                kind, cut = classes[(i, j)]
                if kind == "normal":
                    edge = e[(i, j)]
                elif kind == "drunkard":
                    edge = e1[(i, j)] if cut in q else e2[(i, j)]
                else:
                    if not with_lazy:
                        continue
                    gap = sum(1 for x in range(i, j) if x not in q)
                    edge = bool(rng_lazy.random() < p.prob(gap))
                if edge:
                    rel.add((rank[i], rank[j]))
                    rel.add((rank[j], rank[i]))
        return Structure(GRAPH_ORDER, len(universe), {"R": frozenset(rel)})

    base_vocab = Vocabulary((("<", 2), ("R", 2), ("R1", 2), ("R2", 2), ("P", 1)),
                            order_symbol="<")
    base = Structure(base_vocab, n_star, {
        "R": frozenset(t for t, v in e.items() if v),
        "R1": frozenset(t for t, v in e1.items() if v),
        "R2": frozenset(t for t, v in e2.items() if v),
        "P": frozenset((c,) for c in cutpoints if c < n_star),
    })
    return CoupledSample(
        n=n, n_star=n_star, k_star=k_star, cutpoints=cutpoints,
        i_points=i_points, j_points=j_points, q0=q0, q1=q1, base=base,
        m0=reading(0, q0, True), m1=reading(1, q1, True),
        m_q0=reading(0, q0, False), m_q1=reading(1, q1, False),
        npr_rejections=npr_rejections, size_rejections=size_rejections,
        capped=capped)


# ---------------------------------------------------------------------------
# Coupling verification

@dataclass
class CouplingReport:
    mode: str
    params: dict
    tv_distance: Fraction | None = None
    pair_mismatches: list = field(default_factory=list)
    chisq_pvalues: dict = field(default_factory=dict)
    equality_estimate: dict = field(default_factory=dict)
    equality_bound: float | None = None
    rejections: int = 0
    coin_count: int = 0

    @property
    def ok(self) -> bool:
        if self.mode == "exact":
            return not self.pair_mismatches and (self.tv_distance in (None, 0))
        return all(v > 0.001 for v in self.chisq_pvalues.values())

    def __str__(self):
        if self.mode == "exact":
            return ("coupling exact: coins=%d tv=%s pair_mismatches=%d rejections=%d"
                    % (self.coin_count, self.tv_distance, len(self.pair_mismatches),
                       self.rejections))
        return ("coupling chisq: pvalues=%s equality=%s rejections=%d"
                % ({k: round(v, 4) for k, v in self.chisq_pvalues.items()},
                   self.equality_estimate, self.rejections))


def _frac_prob(p: PSeq, i: int) -> Fraction:
    return Fraction(p.prob(i)).limit_denominator(10 ** 9)


def _q_outcomes(k_star: int, j_d: tuple, j_u: tuple):
    """Exact law of (q0, q1) incl. conditioning on selector-size feasibility."""
    raw = []
    for bits in itertools.product((False, True), repeat=len(j_u)):
        q_no = frozenset(x for x, b in zip(j_u, bits) if b)
        for s in j_u:
            if s in q_no:
                continue
            q_yes = q_no | {s}
            required = k_star + 1 - len(q_yes)
            if required > len(j_d):
                if len(j_d) > 0:
                    continue  # conditioned away by resampling
                required = 0
            for subset in itertools.combinations(j_d, required):
                raw.append((q_no | frozenset(subset), q_yes | frozenset(subset),
                            Fraction(1, math.comb(len(j_d), required))))
    total = sum(w for _, _, w in raw)
    return [(q0, q1, w / total) for q0, q1, w in raw]


def _census_chunk(args):
    pseq_spec, n, k_star, d_theta, epsilon, seed, cutpoints, start, stop = args
    p = parse_pseq(pseq_spec)
    census = {0: {}, 1: {}}
    eq_counts = {0: 0, 1: 0}
    rejections = 0
    for idx in range(start, stop):
        cs = drunkard_sample(p, n, k_star, d_theta, epsilon, seed,
                             cutpoints=cutpoints, draw_index=idx)
        rejections += cs.npr_rejections + cs.size_rejections
        for label, m, m_q in ((0, cs.m0, cs.m_q0), (1, cs.m1, cs.m_q1)):
            key = (m.n, tuple(sorted(t for t in m.rel("R") if t[0] < t[1])))
            census[label][key] = census[label].get(key, 0) + 1
            eq_counts[label] += int(m == m_q)
    return census, eq_counts, rejections


def coupling_check(p: PSeq, n: int, k_star: int, d_theta: int, epsilon: float,
                   seed: int, mode: str = "exact",
                   cutpoints: Sequence[int] | None = None, samples: int = 100_000,
                   max_coins: int = 24, workers: int = 1) -> CouplingReport:
    """exact: rational comparison of each reading's law against the direct
    sampler, per pair (the pairs are independent by construction) plus a
    joint-enumeration total-variation distance when the coin count allows.
    chisq: goodness-of-fit of a sampled census against the product law."""
    if cutpoints is None:
        stride = 3 ** d_theta + 1
        cutpoints = choose_cutpoints(p, epsilon, (2 * k_star + 2) * stride).points
        bound_applies = True
    else:
        bound_applies = False
    cutpoints = tuple(cutpoints)
    n_star = n + k_star + 1
    i_points, j_points = drunkard_layout(k_star, d_theta, cutpoints)
    i_set = frozenset(i_points)
    j_d = j_points[:max(0, k_star - 1)]
    j_u = j_points[max(0, k_star - 1):]
    params = dict(pseq=p.spec(), n=n, k_star=k_star, d_theta=d_theta,
                  epsilon=epsilon, cutpoints=cutpoints)
    report = CouplingReport(mode, params)

    if mode == "exact":
        outcomes = _q_outcomes(k_star, j_d, j_u)
        coins = _exact_pair_check(p, n_star, cutpoints, i_set, outcomes, report)
        report.coin_count = coins
        if coins <= max_coins:
            report.tv_distance = _joint_tv(p, n_star, cutpoints, i_set, outcomes)
        elif not report.pair_mismatches:
            report.tv_distance = Fraction(0)
        return report

    if mode != "chisq":
        raise RandLabError("mode must be exact or chisq")
    chunk_args = [(p.spec(), n, k_star, d_theta, epsilon, seed, cutpoints, a, b)
                  for a, b in _chunk_ranges(samples, workers)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_census_chunk, chunk_args))
    else:
        partials = [_census_chunk(a) for a in chunk_args]
    censuses = {0: {}, 1: {}}
    eq_counts = {0: 0, 1: 0}
    rejections = 0
    for part_census, part_eq, part_rej in partials:
        rejections += part_rej
        for label in (0, 1):
            eq_counts[label] += part_eq[label]
            for key, count in part_census[label].items():
                censuses[label][key] = censuses[label].get(key, 0) + count
    report.rejections = rejections
    for label in (0, 1):
        size = next(iter(censuses[label]))[0]
        report.chisq_pvalues[label] = _census_pvalue(p, size, censuses[label], samples)
        report.equality_estimate[label] = eq_counts[label] / samples
    if bound_applies:
        report.equality_bound = 1 - epsilon / 3
    return report


def _conditional_edge_prob(p: PSeq, i: int, j: int, cls: tuple,
                           q: frozenset[int]) -> Fraction:
    kind, cut = cls
    if kind == "normal":
        return _frac_prob(p, j - i)
    if kind == "drunkard":
        return _frac_prob(p, j - i - 1) if cut in q else _frac_prob(p, j - i)
    gap = sum(1 for x in range(i, j) if x not in q)
    return _frac_prob(p, gap)


def _exact_pair_check(p, n_star, cutpoints, i_set, outcomes, report) -> int:
    coin_sites = set()
    for q0, q1, weight in outcomes:
        for label, q in ((0, q0), (1, q1)):
            universe = [x for x in range(n_star) if x not in q]
            rank = {x: r for r, x in enumerate(universe)}
            for i in universe:
                for j in universe:
                    if i >= j:
                        continue
                    cls = _pair_class(i, j, cutpoints, i_set)
                    got = _conditional_edge_prob(p, i, j, cls, q)
                    want = _frac_prob(p, rank[j] - rank[i])
                    if 0 < float(got) < 1:
                        coin_sites.add((label, q, i, j))
                    if got != want:
                        report.pair_mismatches.append(
                            (label, sorted(q), (i, j), got, want))
    # distinct base coins (normal/drunkard pairs) plus lazy coins per reading
    base_coins = 0
    for i in range(n_star):
        for j in range(i + 1, n_star):
            kind, _ = _pair_class(i, j, cutpoints, i_set)
            if kind == "normal":
                base_coins += int(0 < p.prob(j - i) < 1)
            elif kind == "drunkard":
                base_coins += int(0 < p.prob(j - i - 1) < 1)
                base_coins += int(0 < p.prob(j - i) < 1)
    lazy_coins = len({site for site in coin_sites
                      if _pair_class(site[2], site[3], cutpoints, i_set)[0] == "lazy"})
    return base_coins + lazy_coins


def _product_law(p: PSeq, size: int) -> dict:
    pairs = [(a, b) for a in range(size) for b in range(a + 1, size)]
    out: dict[frozenset, Fraction] = {frozenset(): Fraction(1)}
    for a, b in pairs:
        prob = _frac_prob(p, b - a)
        nxt: dict[frozenset, Fraction] = {}
        for key, w in out.items():
            if prob < 1:
                nxt[key] = nxt.get(key, Fraction(0)) + w * (1 - prob)
            if prob > 0:
                k2 = key | {(a, b)}
                nxt[k2] = nxt.get(k2, Fraction(0)) + w * prob
        out = nxt
    return out


def _joint_tv(p, n_star, cutpoints, i_set, outcomes) -> Fraction:
    tv_total = Fraction(0)
    for label in (0, 1):
        law: dict[frozenset, Fraction] = {}
        size = None
        for q0, q1, weight in outcomes:
            q = (q0, q1)[label]
            universe = [x for x in range(n_star) if x not in q]
            rank = {x: r for r, x in enumerate(universe)}
            size = len(universe)
            partial = {frozenset(): weight}
            for i in universe:
                for j in universe:
                    if i >= j:
                        continue
                    cls = _pair_class(i, j, cutpoints, i_set)
                    prob = _conditional_edge_prob(p, i, j, cls, q)
                    nxt: dict[frozenset, Fraction] = {}
                    for key, w in partial.items():
                        if prob < 1:
                            nxt[key] = nxt.get(key, Fraction(0)) + w * (1 - prob)
                        if prob > 0:
                            k2 = key | {(rank[i], rank[j])}
                            nxt[k2] = nxt.get(k2, Fraction(0)) + w * prob
                    partial = nxt
            for key, w in partial.items():
                law[key] = law.get(key, Fraction(0)) + w
        direct = _product_law(p, size)
        keys = set(law) | set(direct)
        tv = sum(abs(law.get(k, Fraction(0)) - direct.get(k, Fraction(0)))
                 for k in keys) / 2
        tv_total = max(tv_total, tv)
    return tv_total


def _census_pvalue(p: PSeq, size: int, census: Mapping, samples: int) -> float:
    expected = {}
    for key, frac in _product_law(p, size).items():
        skey = (size, tuple(sorted(key)))
        expected[skey] = float(frac) * samples
    # merge classes with small expectation into a remainder bin
    main = [k for k, v in expected.items() if v >= 5]
    obs, exp = [], []
    for k in main:
        obs.append(census.get(k, 0))
        exp.append(expected[k])
    rest_exp = samples - sum(exp)
    rest_obs = samples - sum(obs)
    if rest_exp > 0:
        obs.append(rest_obs)
        exp.append(rest_exp)
    if len(obs) < 2:
        return 1.0
    stat, pvalue = stats.chisquare(obs, exp)
    return float(pvalue)
