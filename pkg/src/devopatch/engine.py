"""Integer-domain differential evolution over patch key-points.

Population initialization samples rectangles inside margin bands around the
image border, admitting only candidates whose patched image already satisfies
the attack predicate. The main loop then repeats mutate → crossover → repair →
patch → query, replacing the worst population member whenever the offspring
scores strictly better, for exactly ``query_budget`` oracle queries.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, InitializationFailure, OracleFailure
from .fitness import INFEASIBLE, FitnessScore, Norm, SuccessPredicate, distance, fitness
from .images import Image
from .patch import Candidate, apply_patch, make_mask

# Per-slot sampling cap during initialization; a slot still unfilled after this
# many queries aborts the attack.
INIT_ATTEMPT_CAP = 200

# Failed-attempt count beyond which the sampling margins collapse to 1 pixel,
# i.e. the near-full-image patch.
MARGIN_COLLAPSE_AT = 10


@dataclass(frozen=True)
class EngineConfig:
    """Search hyperparameters. Defaults follow the recommended operating
    point: population 10, initialization rate 0.35, integer mutation rate 1."""

    population_size: int = 10
    initialization_rate: float = 0.35
    mutation_rate: int = 1
    query_budget: int = 10000
    seed: int = 0
    norm: Norm = Norm.L0_PIXELS

    def __post_init__(self):
        if self.population_size < 3:
            raise ConfigError("population_size", "must be >= 3")
        if not 0.0 < self.initialization_rate <= 0.5:
            raise ConfigError("initialization_rate", "must be in (0, 0.5]")
        if int(self.mutation_rate) != self.mutation_rate or self.mutation_rate < 1:
            raise ConfigError("mutation_rate", "must be an integer >= 1")
        if self.query_budget < 0:
            raise ConfigError("query_budget", "must be >= 0")
        object.__setattr__(self, "mutation_rate", int(self.mutation_rate))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "norm", Norm(self.norm))

    def margins(self, h: int, w: int) -> tuple:
        """Sampling margins floor(H*mu), floor(W*mu) for an H×W image."""
        dh = int(h * self.initialization_rate)
        dw = int(w * self.initialization_rate)
        if dh < 1 or dw < 1:
            raise ConfigError(
                "initialization_rate",
                f"margins floor({h}*{self.initialization_rate}) and "
                f"floor({w}*{self.initialization_rate}) must both be >= 1",
            )
        return dh, dw


@dataclass
class TraceRecord:
    """Best-so-far state immediately after one oracle query (1-based index;
    initialization queries share the same index space as the main loop)."""

    query_index: int
    best_score: FitnessScore
    best_candidate: Candidate | None
    best_area_pixels: int | None


class AttackTrace:
    """Per-query history of the running best candidate plus query accounting.

    ``best_score`` is non-increasing across records; ``best_area_pixels`` is
    the running minimum perturbed-pixel count over best-so-far candidates (it
    equals the best score whenever the fitness norm is L0 pixels). Setup
    queries (the source/target classification checks) are counted separately
    and do not appear as records.
    """

    def __init__(self):
        self.records: list[TraceRecord] = []
        self.setup_queries = 0
        self._best_score = INFEASIBLE
        self._best_candidate = None
        self._best_area = None

    @property
    def total_queries(self) -> int:
        return len(self.records)

    @property
    def best_score(self) -> FitnessScore:
        return self._best_score

    @property
    def best_candidate(self) -> Candidate | None:
        return self._best_candidate

    @property
    def queries_to_best(self) -> int:
        """Smallest query index whose best-so-far score equals the final one."""
        if not self.records:
            return 0
        final = self.records[-1].best_score
        for rec in self.records:
            if rec.best_score == final:
                return rec.query_index
        return self.records[-1].query_index

    def observe(self, score: FitnessScore, candidate, area_pixels) -> None:
        """Record one oracle query; updates the running best on strict improvement."""
        if score < self._best_score:
            self._best_score = score
            self._best_candidate = candidate
            if self._best_area is None or area_pixels < self._best_area:
                self._best_area = int(area_pixels)
        self.records.append(
            TraceRecord(
                query_index=len(self.records) + 1,
                best_score=self._best_score,
                best_candidate=self._best_candidate,
                best_area_pixels=self._best_area,
            )
        )


class Population:
    """Fixed-size candidate set with parallel fitness scores and perturbed
    pixel counts; every member is feasible by construction."""

    def __init__(self, candidates, scores, areas):
        if not len(candidates) == len(scores) == len(areas):
            raise ValueError("candidates, scores, and areas must be parallel")
        if any(not s.is_feasible for s in scores):
            raise ValueError("population members must have feasible scores")
        self.candidates = list(candidates)
        self.scores = list(scores)
        self.areas = list(areas)

    def __len__(self):
        return len(self.candidates)

    @property
    def best_index(self) -> int:
        # min() keeps the first occurrence, so ties go to the lowest index
        return min(range(len(self.scores)), key=lambda k: self.scores[k])

    @property
    def worst_index(self) -> int:
        return max(range(len(self.scores)), key=lambda k: self.scores[k])

    def replace(self, index: int, candidate, score, area) -> None:
        self.candidates[index] = candidate
        self.scores[index] = score
        self.areas[index] = area


@dataclass
class AttackResult:
    """Final adversarial image, its key-points, and the full query trace."""

    adversarial: Image
    candidate: Candidate
    trace: AttackTrace


def mutate(best: Candidate, v_j: Candidate, v_q: Candidate, gamma: int) -> Candidate:
    """Offspring = best + gamma * (v_j - v_q), component-wise signed integers.

    No boundary handling here; repair() is a separate stage.
    """
    g = int(gamma)
    return Candidate(
        best.i1 + g * (v_j.i1 - v_q.i1),
        best.j1 + g * (v_j.j1 - v_q.j1),
        best.i2 + g * (v_j.i2 - v_q.i2),
        best.j2 + g * (v_j.j2 - v_q.j2),
    )


def crossover(candidate: Candidate, rng: np.random.Generator) -> Candidate:
    """Add one uniform draw from {-1, 0, +1} to each of the four components."""
    noise = rng.integers(-1, 2, size=4)
    return Candidate(
        candidate.i1 + int(noise[0]),
        candidate.j1 + int(noise[1]),
        candidate.i2 + int(noise[2]),
        candidate.j2 + int(noise[3]),
    )


def repair(candidate, h: int, w: int) -> Candidate:
    """Deterministic projection into 0 <= i1 < i2 < h, 0 <= j1 < j2 < w.

    Clamp each component into its admissible band, then separate collapsed or
    inverted corner pairs by pushing the far corner one past the near one.
    """
    i1, j1, i2, j2 = candidate
    i1 = min(max(int(i1), 0), h - 2)
    i2 = min(max(int(i2), 1), h - 1)
    j1 = min(max(int(j1), 0), w - 2)
    j2 = min(max(int(j2), 1), w - 1)
    if i1 >= i2:
        i2 = i1 + 1
        if i2 > h - 1:
            i1, i2 = h - 2, h - 1
    if j1 >= j2:
        j2 = j1 + 1
        if j2 > w - 1:
            j1, j2 = w - 2, w - 1
    return Candidate(i1, j1, i2, j2)


def _sample_candidate(rng, h, w, dh, dw) -> Candidate:
    # i1 in [0, dh), i2 in [h-dh, h), j1 in [0, dw), j2 in [w-dw, w);
    # dh, dw <= floor(dim/2) guarantees validity without repair
    return Candidate(
        int(rng.integers(0, dh)),
        int(rng.integers(0, dw)),
        int(rng.integers(h - dh, h)),
        int(rng.integers(w - dw, w)),
    )


def init_population(
    oracle,
    x: Image,
    x_t: Image,
    pred: SuccessPredicate,
    cfg: EngineConfig,
    rng: np.random.Generator | None = None,
    trace: AttackTrace | None = None,
):
    """Fill every population slot with a feasible candidate.

    Each slot samples rectangles from the margin bands, queries the oracle on
    the patched image, and admits the sample once it is feasible and strictly
    better than the slot's current (initially infeasible) score. After more
    than MARGIN_COLLAPSE_AT failures the margins collapse to 1 pixel so the
    near-full-image patch is tried; a slot still unfilled after
    INIT_ATTEMPT_CAP queries raises InitializationFailure.

    Returns
    -------
    (Population, queries_used)
    """
    if x.shape != x_t.shape:
        raise DimensionMismatch(f"source {x.shape} and target {x_t.shape} differ")
    h, w = x.height, x.width
    if h < 2 or w < 2:
        raise DimensionMismatch(f"attack needs H, W >= 2, got {h}×{w}")
    dh0, dw0 = cfg.margins(h, w)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    candidates, scores, areas = [], [], []
    queries = 0
    for slot in range(cfg.population_size):
        dh, dw = dh0, dw0
        c = 0
        slot_score = INFEASIBLE
        admitted = None
        for _ in range(INIT_ATTEMPT_CAP):
            cand = _sample_candidate(rng, h, w, dh, dw)
            patched = apply_patch(x, x_t, make_mask(cand, h, w))
            label = oracle.classify(patched)
            queries += 1
            score = fitness(x, patched, label, pred, cfg.norm)
            area = None
            if score < slot_score:
                area = int(distance(x, patched, Norm.L0_PIXELS))
                admitted = (cand, score, area)
            if trace is not None:
                trace.observe(score, cand, area)
            if admitted is not None:
                break
            if c > MARGIN_COLLAPSE_AT:
                dh, dw = 1, 1
            c += 1
        if admitted is None:
            raise InitializationFailure(
                f"population slot {slot} not filled within {INIT_ATTEMPT_CAP} "
                f"attempts; the target image is not classified as required",
                queries_used=queries,
            )
        cand, score, area = admitted
        candidates.append(cand)
        scores.append(score)
        areas.append(area)
    return Population(candidates, scores, areas), queries


def run_attack(
    oracle,
    x: Image,
    y: int,
    x_t: Image,
    pred: SuccessPredicate,
    cfg: EngineConfig,
) -> AttackResult:
    """Run the full decision-based patch attack.

    Two setup queries first verify that the oracle classifies the source image
    as ``y`` and the target image consistently with the predicate (equal to
    the target label when targeted, different from ``y`` when untargeted);
    both images are snapped to the 8-bit grid beforehand so every queried
    image survives a PNG round trip bit-exactly. Initialization then fills the
    population, and the main loop runs exactly ``cfg.query_budget`` iterations
    of mutate → crossover → repair → patch → query with worst-replacement
    selection.

    Raises InitializationFailure when a setup check or initialization fails,
    and OracleFailure (with the partial trace attached) on transport errors.
    """
    if x.shape != x_t.shape:
        raise DimensionMismatch(f"source {x.shape} and target {x_t.shape} differ")
    h, w = x.height, x.width
    cfg.margins(h, w)  # fail fast on degenerate margins
    x = x.quantize8()
    x_t = x_t.quantize8()

    trace = AttackTrace()
    label_x = oracle.classify(x)
    trace.setup_queries += 1
    if label_x != y:
        raise InitializationFailure(
            f"source image classified as {label_x}, expected {y}",
            setup_queries=trace.setup_queries,
        )
    label_t = oracle.classify(x_t)
    trace.setup_queries += 1
    if not pred.holds(label_t):
        raise InitializationFailure(
            f"target image classified as {label_t}, which does not satisfy the "
            f"{pred.mode} predicate (label {pred.label})",
            setup_queries=trace.setup_queries,
        )

    rng = np.random.default_rng(cfg.seed)
    try:
        population, _ = init_population(oracle, x, x_t, pred, cfg, rng=rng, trace=trace)
        for _ in range(cfg.query_budget):
            best_k = population.best_index
            worst_k = population.worst_index
            pool = np.array([k for k in range(len(population)) if k != best_k])
            pick = rng.choice(pool, size=2, replace=False)
            v_j = population.candidates[int(pick[0])]
            v_q = population.candidates[int(pick[1])]

            cand = mutate(population.candidates[best_k], v_j, v_q, cfg.mutation_rate)
            cand = crossover(cand, rng)
            cand = repair(cand, h, w)

            patched = apply_patch(x, x_t, make_mask(cand, h, w))
            label = oracle.classify(patched)
            score = fitness(x, patched, label, pred, cfg.norm)
            area = None
            if score < population.scores[worst_k]:
                area = int(distance(x, patched, Norm.L0_PIXELS))
                population.replace(worst_k, cand, score, area)
            trace.observe(score, cand, area)
    except InitializationFailure as exc:
        exc.setup_queries = trace.setup_queries
        raise
    except OracleFailure as exc:
        exc.trace = trace
        raise

    best_k = population.best_index
    best_candidate = population.candidates[best_k]
    adversarial = apply_patch(x, x_t, make_mask(best_candidate, h, w))
    return AttackResult(adversarial=adversarial, candidate=best_candidate, trace=trace)
