"""
Classical dynamics at infinity: the Legendre vector field W on the boundary
phase space (y, nu, mu), its radial points and their classification,
bicharacteristic integration and the Morse decomposition of the outgoing
radial set.
"""

import cmath
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from app.core.errors import CriticalEnergy, EnergyDrift, InvalidArgument, NoConvergence, WrongKind
from app.core.metrics import MetricsTracker
from app.schemas.config import BoundarySettings, ClassicalSettings
from app.services.boundary_model import BoundaryData, CriticalKind, CriticalPoint, find_critical_points

logger = logging.getLogger("radialiq.classical")


class RadialKind(str, Enum):
    CENTER = "Center"
    DEGENERATE_CENTER = "DegenerateCenter"
    SINK_OR_SOURCE = "SinkOrSource"
    SADDLE = "Saddle"


class Direction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class TrajectoryStatus(str, Enum):
    CONVERGED = "converged"
    LEFT_DOMAIN = "left_domain"
    MAX_TIME = "max_time"


# ========== DOMAIN TYPES ==========

@dataclass(frozen=True)
class PhasePoint:
    y: float
    nu: float
    mu: float

    def energy(self, b: BoundaryData) -> float:
        return self.nu ** 2 + self.mu ** 2 + b.v0.scalar(self.y)


@dataclass(frozen=True)
class RadialPoint:
    crit: CriticalPoint
    sign: int
    nu_t: float
    r1: complex
    r2: complex
    kind: RadialKind
    resonant: bool
    eigvecs: Tuple[Tuple[complex, complex], Tuple[complex, complex]]
    lam: float

    @property
    def outgoing(self) -> bool:
        return self.sign > 0

    @property
    def y_c(self) -> float:
        return self.crit.y_c

    @property
    def a(self) -> float:
        return 0.5 * self.crit.hessian

    @property
    def point(self) -> PhasePoint:
        return PhasePoint(self.crit.y_c, self.nu_t, 0.0)

    @property
    def label(self) -> str:
        tag = "max" if self.crit.kind == CriticalKind.MAXIMUM else "min"
        return f"q_{tag}{'+' if self.outgoing else '-'}@{self.crit.y_c:.6f}"

    def r(self, branch: int) -> complex:
        if branch not in (1, 2):
            raise InvalidArgument(f"branch must be 1 or 2, got {branch}")
        return self.r1 if branch == 1 else self.r2

    def r_real(self, branch: int) -> float:
        return float(self.r(branch).real)

    def to_dict(self) -> Dict:
        def num(z: complex):
            return z.real if abs(z.imag) == 0.0 else [z.real, z.imag]
        return {
            "label": self.label,
            "y": self.crit.y_c,
            "nu": self.nu_t,
            "kind": self.kind.value,
            "critical": self.crit.kind.value,
            "r1": num(self.r1),
            "r2": num(self.r2),
            "resonant": self.resonant,
        }


@dataclass(frozen=True)
class Linearization:
    """Linearized flow of W in (y, mu) at a radial point."""

    matrix: np.ndarray
    eigenvalues: Tuple[complex, complex]
    tangents: Tuple[Tuple[complex, complex], Tuple[complex, complex]]
    covectors: Tuple[Tuple[complex, complex], Tuple[complex, complex]]


@dataclass(frozen=True)
class Bicharacteristic:
    times: np.ndarray
    states: np.ndarray
    alpha_limit: Optional[RadialPoint]
    omega_limit: Optional[RadialPoint]
    status: TrajectoryStatus
    energy_drift: float
    steps: int

    @property
    def samples(self) -> List[Tuple[float, PhasePoint]]:
        return [(float(t), PhasePoint(*map(float, s))) for t, s in zip(self.times, self.states)]

    @property
    def limit(self) -> Optional[RadialPoint]:
        return self.omega_limit or self.alpha_limit

    def nu_min_increment(self) -> float:
        if len(self.times) < 2:
            return 0.0
        return float(np.min(np.diff(self.states[:, 1])))


@dataclass(frozen=True)
class Seed:
    direction: Tuple[float, float, float]
    point: PhasePoint


@dataclass(frozen=True)
class MorseDiagram:
    lam: float
    nodes: Tuple[RadialPoint, ...]
    edges: Tuple[Tuple[str, str], ...]
    a_min: float
    filtration: Tuple[Tuple[str, ...], ...]
    unresolved: Tuple[Dict, ...] = ()
    graph: nx.DiGraph = field(default=None, repr=False, compare=False)

    def node(self, label: str) -> RadialPoint:
        for q in self.nodes:
            if q.label == label:
                return q
        raise KeyError(label)


# ========== VECTOR FIELD ==========

def vector_field(p: PhasePoint, b: BoundaryData) -> Tuple[float, float, float]:
    """W = (2 mu, 2 mu^2, -(V0'(y) + 2 nu mu)) in the h0-normalized frame."""
    return _field(b, p.y, p.nu, p.mu)


def _field(b: BoundaryData, y: float, nu: float, mu: float) -> Tuple[float, float, float]:
    return (2.0 * mu, 2.0 * mu * mu, -(b.v0.scalar(y, 1) + 2.0 * nu * mu))


# ========== RADIAL POINTS ==========

def _exponents(a: float, nu_t: float) -> Tuple[complex, complex, float]:
    """Roots r1, r2 of r^2 - r + a/nu_t^2 = 0 and the discriminant 1/4 - a/nu_t^2."""
    q = a / (nu_t * nu_t)
    disc = 0.25 - q
    if disc < 0:
        s = math.sqrt(-disc)
        return complex(0.5, -s), complex(0.5, s), disc
    r2 = 0.5 + math.sqrt(disc)
    # r1 from the product avoids cancellation in 1/2 - sqrt(disc)
    r1 = q / r2
    return complex(r1, 0.0), complex(r2, 0.0), disc


def classify(cp: CriticalPoint, lam: float, sign: int,
             settings: Optional[ClassicalSettings] = None) -> RadialPoint:
    settings = settings or ClassicalSettings()
    nu_t = sign * math.sqrt(lam - cp.value)
    a = 0.5 * cp.hessian
    r1, r2, disc = _exponents(a, nu_t)
    resonant = False

    if cp.kind == CriticalKind.MAXIMUM:
        kind = RadialKind.SADDLE
    else:
        lam_hess = cp.value + 2.0 * cp.hessian
        if abs(lam - lam_hess) <= settings.cv_tol:
            kind = RadialKind.DEGENERATE_CENTER
            r1 = r2 = complex(0.5, 0.0)
        elif lam < lam_hess:
            kind = RadialKind.CENTER
        else:
            kind = RadialKind.SINK_OR_SOURCE
            ratio = r2.real / r1.real
            n = round(ratio)
            gap = abs(ratio - n) / ratio
            resonant = n >= 2 and gap <= settings.resonance_tol
            if n >= 2 and not resonant and gap <= settings.near_resonance:
                logger.warning(
                    f"[CLASSICAL] near-resonant sink at y={cp.y_c:.6f}: r2/r1={ratio:.9f}",
                    extra={"details": {"ratio": ratio, "nearest": n, "lambda": lam}},
                )

    eigvecs = (
        (complex(nu_t) * (1 - r1), complex(1.0)),
        (complex(nu_t) * (1 - r2), complex(1.0)),
    )
    return RadialPoint(cp, sign, nu_t, r1, r2, kind, resonant, eigvecs, lam)


def radial_points(b: BoundaryData, lam: float,
                  settings: Optional[ClassicalSettings] = None,
                  boundary: Optional[BoundarySettings] = None) -> List[RadialPoint]:
    """
    Two radial points (+/- nu_t) per critical point below lambda, outgoing first.

    Raises:
        CriticalEnergy: lambda within cv_tol of a critical value
    """
    settings = settings or ClassicalSettings()
    points = find_critical_points(b, boundary)
    nearest = min(abs(lam - p.value) for p in points)
    if nearest < settings.cv_tol:
        raise CriticalEnergy(f"lambda={lam} is a critical value", {"lambda": lam, "distance": nearest})
    out: List[RadialPoint] = []
    for sign in (1, -1):
        for cp in points:
            if cp.value < lam:
                out.append(classify(cp, lam, sign, settings))
    return out


def linearization(q: RadialPoint) -> Linearization:
    """
    Linearized field in (y, mu): [[0, 2], [-2a, -2 nu_t]].
    Eigenvalues s_j = -2 nu_t r_j with tangent (1, -nu_t r_j); the covector
    nu_t (1 - r_j) dy + d mu annihilates the other eigendirection.
    """
    m = np.array([[0.0, 2.0], [-2.0 * q.a, -2.0 * q.nu_t]])
    s = (-2.0 * q.nu_t * q.r1, -2.0 * q.nu_t * q.r2)
    tangents = ((1.0 + 0j, -q.nu_t * q.r1), (1.0 + 0j, -q.nu_t * q.r2))
    return Linearization(m, s, tangents, q.eigvecs)


def classify_sweep(b: BoundaryData, lambdas: Sequence[float],
                   settings: Optional[ClassicalSettings] = None) -> List[Tuple[float, List[RadialPoint]]]:
    """Radial points over a list of energies; critical energies are skipped."""
    sweep = []
    for lam in lambdas:
        try:
            sweep.append((float(lam), radial_points(b, float(lam), settings)))
        except CriticalEnergy:
            logger.info(f"[CLASSICAL] skipping critical energy {lam}")
    return sweep


# ========== INTEGRATION ==========

def _rk4(b: BoundaryData, s: Tuple[float, float, float], h: float) -> Tuple[float, float, float]:
    y, nu, mu = s
    k1 = _field(b, y, nu, mu)
    k2 = _field(b, y + 0.5 * h * k1[0], nu + 0.5 * h * k1[1], mu + 0.5 * h * k1[2])
    k3 = _field(b, y + 0.5 * h * k2[0], nu + 0.5 * h * k2[1], mu + 0.5 * h * k2[2])
    k4 = _field(b, y + h * k3[0], nu + h * k3[1], mu + h * k3[2])
    c = h / 6.0
    return (
        y + c * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        nu + c * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        mu + c * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
    )


def _distance(b: BoundaryData, s: Tuple[float, float, float], q: RadialPoint) -> float:
    period = b.circumference
    dy = (s[0] - q.crit.y_c) % period
    dy = min(dy, period - dy)
    return math.sqrt(dy * dy + (s[1] - q.nu_t) ** 2 + s[2] * s[2])


def integrate(start: PhasePoint, b: BoundaryData, lam: float,
              direction: Direction = Direction.FORWARD,
              settings: Optional[ClassicalSettings] = None,
              radial: Optional[Sequence[RadialPoint]] = None) -> Bicharacteristic:
    """
    Adaptive RK4 with step doubling. The two-half-step solution is accepted,
    which keeps every nu increment non-negative.

    Raises:
        EnergyDrift: |p - p(start)| exceeds 10 * energy_tol
    """
    settings = settings or ClassicalSettings()
    if radial is None:
        radial = radial_points(b, lam, settings)
    sgn = 1.0 if Direction(direction) == Direction.FORWARD else -1.0
    state = (start.y, start.nu, start.mu)
    e0 = start.energy(b)
    if abs(e0 - lam) > settings.energy_tol:
        logger.warning(f"[CLASSICAL] start off Sigma(lambda) by {e0 - lam:.3e}")

    for q in radial:
        if _distance(b, state, q) <= 1e-12:
            bic = Bicharacteristic(np.array([0.0]), np.array([state]), q, q,
                                   TrajectoryStatus.CONVERGED, 0.0, 0)
            MetricsTracker.track_trajectory(bic.status.value, 0)
            return bic

    start_dist = [_distance(b, state, q) for q in radial]
    armed = [d > settings.capture_radius for d in start_dist]

    times = [0.0]
    states = [state]
    t = 0.0
    h = min(0.01, settings.h_max)
    drift = 0.0
    steps = 0
    status = TrajectoryStatus.MAX_TIME
    limit: Optional[RadialPoint] = None
    tol = settings.step_tol

    while t < settings.max_time:
        h = min(h, settings.max_time - t)
        full = _rk4(b, state, sgn * h)
        half = _rk4(b, state, 0.5 * sgn * h)
        fine = _rk4(b, half, 0.5 * sgn * h)
        if not all(map(math.isfinite, fine)):
            status = TrajectoryStatus.LEFT_DOMAIN
            break
        err = max(abs(fine[i] - full[i]) for i in range(3)) / 15.0
        if err > tol and h > settings.h_min:
            h = max(settings.h_min, h * max(0.2, 0.9 * (tol / err) ** 0.2))
            continue

        state = fine
        t += h
        steps += 1
        times.append(sgn * t)
        states.append(state)
        drift = max(drift, abs(state[1] ** 2 + state[2] ** 2 + b.v0.scalar(state[0]) - e0))
        if drift > 10.0 * settings.energy_tol:
            raise EnergyDrift(f"energy drift {drift:.3e} after {steps} steps",
                              {"drift": drift, "t": t, "steps": steps})

        for i, q in enumerate(radial):
            d = _distance(b, state, q)
            if d > settings.capture_radius:
                armed[i] = True
            elif armed[i] or d < 1e-2 * start_dist[i]:
                limit = q
                break
        if limit is not None:
            status = TrajectoryStatus.CONVERGED
            break

        growth = 2.0 if err == 0.0 else min(2.0, 0.9 * (tol / err) ** 0.2)
        h = min(settings.h_max, h * max(1.0, growth))

    arr_t = np.array(times)
    arr_s = np.array(states)
    arr_s[:, 0] = np.mod(arr_s[:, 0], b.circumference)
    if sgn < 0:
        arr_t = arr_t[::-1]
        arr_s = arr_s[::-1]
    MetricsTracker.track_trajectory(status.value, steps)
    if sgn > 0:
        return Bicharacteristic(arr_t, arr_s, None, limit, status, drift, steps)
    return Bicharacteristic(arr_t, arr_s, limit, None, status, drift, steps)


def sample_sigma(b: BoundaryData, lam: float, n: int, seed: int) -> List[PhasePoint]:
    """Deterministic random starts on Sigma(lambda) = {nu^2 + mu^2 + V0 = lambda}."""
    rng = np.random.default_rng(seed)
    starts: List[PhasePoint] = []
    while len(starts) < n:
        y = float(rng.uniform(0.0, b.circumference))
        room = lam - b.v0.scalar(y)
        if room <= 0:
            continue
        phi = float(rng.uniform(0.0, 2 * math.pi))
        rho = math.sqrt(room)
        nu, mu = rho * math.cos(phi), rho * math.sin(phi)
        # re-project nu so the start sits on Sigma to rounding
        nu = math.copysign(math.sqrt(max(room - mu * mu, 0.0)), nu)
        starts.append(PhasePoint(y, nu, mu))
    return starts


def integrate_many(b: BoundaryData, lam: float, starts: Sequence[PhasePoint],
                   settings: Optional[ClassicalSettings] = None, jobs: int = 1,
                   direction: Direction = Direction.FORWARD) -> List[Bicharacteristic]:
    """Integrate a batch of starts in parallel; results keep the input order."""
    settings = settings or ClassicalSettings()
    radial = radial_points(b, lam, settings)

    def run(p: PhasePoint) -> Bicharacteristic:
        return integrate(p, b, lam, direction, settings, radial)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(run, starts))


def trajectory_statistics(lam: float, results: Sequence[Bicharacteristic]) -> Dict:
    """Capture fraction, worst energy drift and worst nu decrement of a batch."""
    n = len(results)
    converged = [r for r in results if r.status == TrajectoryStatus.CONVERGED]
    outgoing_limits = sum(1 for r in converged if r.omega_limit is not None and r.omega_limit.outgoing)
    flagged = n - len(converged)
    if flagged:
        logger.warning(f"[CLASSICAL] {flagged} of {n} trajectories not captured",
                       extra={"details": {"lambda": lam, "flagged": flagged}})
    return {
        "lambda": lam,
        "n": n,
        "captured": len(converged),
        "capture_fraction": len(converged) / n if n else 0.0,
        "outgoing_limits": outgoing_limits,
        "max_energy_drift": max((r.energy_drift for r in results), default=0.0),
        "min_nu_increment": min((r.nu_min_increment() for r in results), default=0.0),
    }


def limit_statistics(b: BoundaryData, lam: float, n: int, seed: int,
                     settings: Optional[ClassicalSettings] = None, jobs: int = 1) -> Dict:
    """Statistics of n seeded random starts on Sigma(lambda)."""
    results = integrate_many(b, lam, sample_sigma(b, lam, n, seed), settings, jobs)
    return trajectory_statistics(lam, results)


# ========== UNSTABLE MANIFOLDS ==========

def _on_sigma(q: RadialPoint, b: BoundaryData, y: float, mu: float) -> PhasePoint:
    room = q.lam - b.v0.scalar(y) - mu * mu
    return PhasePoint(y, math.copysign(math.sqrt(max(room, 0.0)), q.nu_t), mu)


def unstable_directions(q: RadialPoint, b: BoundaryData,
                        settings: Optional[ClassicalSettings] = None) -> List[Seed]:
    """
    Seeds offset by seed_eps along the unstable eigendirections of q.

    Saddle: the two signs of the eigendirection with positive eigenvalue.
    Repelling node (incoming sink): a ring of n_seed directions.
    Attracting node: no seeds.

    Raises:
        WrongKind: centers and degenerate centers
    """
    settings = settings or ClassicalSettings()
    if q.kind in (RadialKind.CENTER, RadialKind.DEGENERATE_CENTER):
        raise WrongKind(f"{q.kind.value} has no hyperbolic splitting", {"label": q.label})
    lin = linearization(q)
    eps = settings.seed_eps

    if q.kind == RadialKind.SADDLE:
        j = 0 if lin.eigenvalues[0].real > 0 else 1
        ty, tmu = (z.real for z in lin.tangents[j])
        norm = math.hypot(ty, tmu)
        ty, tmu = ty / norm, tmu / norm
        seeds = []
        for s in (1.0, -1.0):
            p = _on_sigma(q, b, q.y_c + s * eps * ty, s * eps * tmu)
            seeds.append(Seed((s * ty, 0.0, s * tmu), p))
        return seeds

    if all(z.real > 0 for z in lin.eigenvalues):
        seeds = []
        for k in range(settings.n_seed):
            phi = 2 * math.pi * k / settings.n_seed
            dy, dmu = math.cos(phi), math.sin(phi)
            seeds.append(Seed((dy, 0.0, dmu), _on_sigma(q, b, q.y_c + eps * dy, eps * dmu)))
        return seeds
    return []


# ========== MORSE DECOMPOSITION ==========

def morse_diagram(b: BoundaryData, lam: float,
                  settings: Optional[ClassicalSettings] = None, jobs: int = 1) -> MorseDiagram:
    """
    DAG of outgoing radial points: an edge q -> q' whenever the unstable
    flow-out of q is captured at q' != q. Trajectories that are not captured
    are recorded as unresolved connections and their edge is omitted.
    """
    settings = settings or ClassicalSettings()
    radial = radial_points(b, lam, settings)
    nodes = sorted((q for q in radial if q.outgoing), key=lambda q: (-q.nu_t, q.y_c))

    tasks: List[Tuple[RadialPoint, Seed]] = []
    for q in nodes:
        if q.kind == RadialKind.SADDLE:
            tasks.extend((q, s) for s in unstable_directions(q, b, settings))

    def run(task: Tuple[RadialPoint, Seed]) -> Tuple[RadialPoint, Seed, Bicharacteristic]:
        q, seed = task
        return q, seed, integrate(seed.point, b, lam, Direction.FORWARD, settings, radial)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(run, tasks))

    graph = nx.DiGraph()
    for q in nodes:
        graph.add_node(q.label, kind=q.kind.value, nu=q.nu_t, y=q.y_c)

    edges = set()
    unresolved = []
    for q, seed, traj in results:
        target = traj.omega_limit
        if traj.status != TrajectoryStatus.CONVERGED or target is None:
            record = {"source": q.label, "seed": list(seed.direction), "status": traj.status.value}
            unresolved.append(record)
            logger.warning(f"[CLASSICAL] unresolved connection from {q.label}", extra={"details": record})
            continue
        if target.label != q.label:
            if not target.outgoing:
                raise NoConvergence(f"flow-out of {q.label} captured at incoming point {target.label}")
            edges.add((q.label, target.label))

    edges_sorted = tuple(sorted(edges))
    graph.add_edges_from(edges_sorted)
    if not nx.is_directed_acyclic_graph(graph):
        raise NoConvergence("flow-out relation is not acyclic", {"edges": list(edges_sorted)})
    for src, dst in edges_sorted:
        if not graph.nodes[dst]["nu"] > graph.nodes[src]["nu"]:
            raise NoConvergence(f"edge {src}->{dst} does not increase nu")

    labels = [q.label for q in nodes]
    filtration = tuple(tuple(labels[: i + 1]) for i in range(len(labels)))
    for gamma in filtration:
        members = set(gamma)
        for node in gamma:
            if not nx.descendants(graph, node) <= members:
                raise NoConvergence(f"filtration step {gamma} is not closed")

    a_min = min((q.nu_t for q in nodes), default=math.nan)
    return MorseDiagram(lam, tuple(nodes), edges_sorted, a_min, filtration,
                        tuple(sorted(unresolved, key=lambda r: (r["source"], r["seed"]))), graph)


def to_dot(diagram: MorseDiagram) -> str:
    """DOT text for the Morse DAG."""
    lines = [f"digraph morse {{", f'  label="lambda={diagram.lam:.6g}";']
    for q in diagram.nodes:
        lines.append(f'  "{q.label}" [label="{q.label}\\n{q.kind.value} nu={q.nu_t:.6f}"];')
    for src, dst in diagram.edges:
        lines.append(f'  "{src}" -> "{dst}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
