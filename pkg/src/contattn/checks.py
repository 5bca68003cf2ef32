"""Acceptance checks shared by ``contattn check`` and the test suite.

Each check returns a CheckResult carrying the worst observed deviation and
the tolerance it was held to. Checks are deterministic (fixed seeds).
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import attention as att
from . import core_math as cm
from . import densities as dens
from . import discrete
from . import oracle
from .demo import DemoConfig, run_demo
from .value_fn import ObservationMatrix, design_matrix, fit, precompute_G, sequence_locations


@dataclass
class CheckResult:
    name: str
    criterion: int
    passed: bool
    delta: float
    tolerance: float
    runtime: float = 0.0
    time_limit: float | None = None
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.delta = float(self.delta)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.criterion:2d} {self.name:<24s} delta={self.delta:.3e} "
                f"tol={self.tolerance:.1e} time={self.runtime:.2f}s")

    def as_dict(self) -> dict:
        return {"name": self.name, "criterion": self.criterion, "passed": self.passed,
                "delta": self.delta, "tolerance": self.tolerance, "runtime": self.runtime,
                "time_limit": self.time_limit, "detail": self.detail}


@dataclass(frozen=True)
class Check:
    name: str
    criterion: int
    fn: object
    time_limit: float | None = None
    tags: tuple = ()

    def matches(self, pattern: str | None) -> bool:
        if not pattern:
            return True
        return any(pattern in s for s in (self.name, *self.tags))

    def run(self) -> CheckResult:
        t0 = time.perf_counter()
        res = self.fn()
        res.runtime = time.perf_counter() - t0
        res.time_limit = self.time_limit
        if self.time_limit is not None and res.runtime > self.time_limit:
            res.passed = False
            res.detail["timeout"] = True
        return res


REGISTRY: list[Check] = []


def register(name, criterion, time_limit=None, tags=()):
    def deco(fn):
        REGISTRY.append(Check(name, criterion, fn, time_limit, tuple(tags)))
        return fn
    return deco


def _result(name, criterion, deltas, tol, **detail):
    delta = float(max(deltas)) if len(deltas) else 0.0
    return CheckResult(name, criterion, bool(delta <= tol), delta, tol, detail=detail)


def _random_spd(rng, lo, hi):
    ang = rng.uniform(0, math.pi)
    R = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
    return R @ np.diag(rng.uniform(lo, hi, 2)) @ R.T


# --------------------------------------------------------------------------
# 1. normalizer lambda

@register("normalizer_lambda", 1, time_limit=10.0, tags=("lambda", "density"))
def check_normalizer_lambda() -> CheckResult:
    rng = np.random.default_rng(1)
    n = 25
    deltas = {}

    def one_d(lam_closed, f, mu, half):
        lam, _ = dens.lambda_numeric_oracle(f, 2.0, (mu - 2 * half - 1, mu + 2 * half + 1), argmax=mu)
        return abs(lam_closed - lam)

    d = []
    for _ in range(n):
        mu, s2 = rng.uniform(-1, 1), rng.uniform(0.02, 2.0)
        f = lambda t, mu=mu, s2=s2: -(t - mu) ** 2 / (2 * s2)
        d.append(one_d(dens.truncated_parabola_lambda(s2), f, mu, (1.5 * s2) ** (1 / 3)))
    deltas["truncated_parabola"] = max(d)

    d = []
    for _ in range(n):
        mu, s2 = rng.uniform(-1, 1), rng.uniform(0.02, 2.0)
        f = lambda t, mu=mu, s2=s2: -(t - mu) ** 2 / (2 * s2)
        d.append(one_d(dens.paraboloid_lambda([[s2]]), f, mu, (1.5 * s2) ** (1 / 3)))
    deltas["paraboloid_n1"] = max(d)

    d = []
    for _ in range(n):
        mu = rng.uniform(-1, 1, 2)
        cov = _random_spd(rng, 0.02, 1.0)
        prec = np.linalg.inv(cov)

        def f(X, Y, mu=mu, prec=prec):
            dx, dy = X - mu[0], Y - mu[1]
            return -0.5 * (prec[0, 0] * dx * dx + 2 * prec[0, 1] * dx * dy + prec[1, 1] * dy * dy)

        lam, _ = dens.lambda_numeric_oracle_2d(f, 2.0, mu)
        d.append(abs(dens.paraboloid_lambda(cov) - lam))
    deltas["paraboloid_n2"] = max(d)

    d = []
    for _ in range(n):
        mu, b = rng.uniform(-1, 1), rng.uniform(0.05, 3.0)
        f = lambda t, mu=mu, b=b: -abs(t - mu) / b
        d.append(one_d(dens.make_triangular(mu, b).lam, f, mu, math.sqrt(b)))
    deltas["triangular"] = max(d)

    d = []
    gens = {k: dens.LocationScaleG(*v) for k, v in dens.NAMED_GENERATORS.items()}
    names = sorted(gens)
    for i in range(n):
        G = gens[names[i % len(names)]]
        mu, sigma = rng.uniform(-1, 1), rng.uniform(0.2, 2.0)
        p = dens.make_location_scale(G, mu, sigma)
        f = lambda t, G=G, mu=mu, sigma=sigma: -G.g_prime(abs(t - mu) / sigma) / sigma
        d.append(one_d(p.lam, f, mu, G.a_star * sigma))
    deltas["location_scale"] = max(d)

    return _result("normalizer_lambda", 1, list(deltas.values()), 1e-7, per_family=deltas)


# --------------------------------------------------------------------------
# 2. Epanechnikov anchor

@register("epanechnikov_anchor", 2, tags=("lambda", "density"))
def check_epanechnikov() -> CheckResult:
    p = dens.make_truncated_parabola(0.0, 2.0 / 3.0)
    d_lam = abs(p.lam + 0.75)
    d_peak = abs(p.pdf(0.0) - 0.75)
    return _result("epanechnikov_anchor", 2, [d_lam, d_peak], 1e-12, lam=p.lam, peak=p.pdf(0.0))


# --------------------------------------------------------------------------
# 3. density mass

def sample_densities(rng, per_family: int = 5):
    out = []
    gens = [dens.LocationScaleG(*v) for v in dens.NAMED_GENERATORS.values()]
    for k in range(per_family):
        out.append(dens.make_gaussian_1d(rng.uniform(-2, 2), rng.uniform(0.01, 3)))
        out.append(dens.make_gaussian_2d(rng.uniform(-1, 1, 2), _random_spd(rng, 0.01, 2)))
        out.append(dens.make_truncated_parabola(rng.uniform(-2, 2), rng.uniform(0.01, 3)))
        out.append(dens.make_truncated_paraboloid(rng.uniform(-1, 1, 2), _random_spd(rng, 0.01, 2)))
        out.append(dens.make_triangular(rng.uniform(-2, 2), rng.uniform(0.01, 3)))
        out.append(dens.make_location_scale(gens[k % len(gens)], rng.uniform(-2, 2), rng.uniform(0.1, 3)))
    return out


@register("normalization_mass", 3, time_limit=30.0, tags=("density", "mass"))
def check_density_mass() -> CheckResult:
    rng = np.random.default_rng(3)
    worst = {}
    for p in sample_densities(rng):
        if p.dim == 1:
            mass = oracle.expectation_quadrature(p, lambda t: 1.0)
        else:
            mass = oracle.expectation_quadrature(p, lambda T: np.ones(np.shape(T)[:-1]))
        key = p.family.value
        worst[key] = max(worst.get(key, 0.0), abs(mass - 1.0))
    return _result("normalization_mass", 3, list(worst.values()), 1e-8, per_family=worst)


# --------------------------------------------------------------------------
# 4. gradient of A_alpha

@register("a_alpha_gradient", 4, tags=("entropy",))
def check_a_alpha_gradient() -> CheckResult:
    rng = np.random.default_rng(4)
    deltas = []
    for alpha in (1, 2):
        for _ in range(10):
            score = dens.CanonicalScore1D.from_moments(rng.uniform(-1, 1), rng.uniform(0.05, 2.0))
            p = dens.density_from_score(score, alpha)
            ev, _ = dens.escort(p, 2 - alpha)
            spec = cm.QuadratureSpec(1e-12, 200)
            escort_grad = np.array([
                dens.integrate_density(p, lambda t: ev(t) * t, spec),
                dens.integrate_density(p, lambda t: ev(t) * t * t, spec),
            ])
            fd = oracle.finite_diff_jacobian(
                lambda th: dens.a_alpha(dens.CanonicalScore1D.from_vector(th), alpha),
                score.as_vector())[0]
            rel = np.linalg.norm(escort_grad - fd) / np.linalg.norm(fd)
            rel_closed = np.linalg.norm(dens.grad_a_alpha(score, alpha) - escort_grad) / np.linalg.norm(fd)
            deltas.extend([rel, rel_closed])
    return _result("a_alpha_gradient", 4, deltas, 1e-5)


# --------------------------------------------------------------------------
# 5. Jacobian three-way agreement

def random_attention_config(rng, alpha, dim):
    """Score and basis for one randomized Jacobian/forward comparison."""
    if dim == 1:
        score = dens.CanonicalScore1D.from_moments(rng.uniform(0.2, 0.8), rng.uniform(0.005, 0.1))
        basis = att.RBFBasis.linear_1d(int(rng.integers(3, 9)), float(rng.choice([0.1, 0.5])))
    else:
        score = dens.CanonicalScore2D.from_moments(rng.uniform(0.3, 0.7, 2), _random_spd(rng, 0.01, 0.05))
        n = int(rng.integers(2, 6))
        centers = rng.uniform(0.0, 1.0, (n, 2))
        widths = np.array([_random_spd(rng, 0.01, 0.05) for _ in range(n)])
        basis = att.RBFBasis(centers, widths)
    return score, basis


@register("jacobian_three_way", 5, time_limit=120.0, tags=("attention", "jacobian"))
def check_jacobian_three_way() -> CheckResult:
    rng = np.random.default_rng(5)
    tols = {"alpha=1,D=1": 1e-6, "alpha=1,D=2": 1e-6, "alpha=2,D=1": 1e-6, "alpha=2,D=2": 1e-4}
    worst = {}
    for alpha, dim in ((1, 1), (1, 2), (2, 1), (2, 2)):
        step = 1e-5 if (alpha, dim) == (2, 2) else 1e-6
        w = 0.0
        for _ in range(10):
            score, basis = random_attention_config(rng, alpha, dim)
            J = att.jacobian(score, basis, alpha)
            Jq = oracle.attention_jacobian_quadrature(score, basis, alpha)
            Jf = oracle.fd_attention_jacobian(lambda s: att.forward(s, basis, alpha), score, step)
            w = max(w, np.abs(J - Jq).max(), np.abs(J - Jf).max(), np.abs(Jq - Jf).max())
        worst[f"alpha={alpha},D={dim}"] = w
    ratio = max(worst[k] / tols[k] for k in tols)
    return CheckResult("jacobian_three_way", 5, ratio <= 1, ratio, 1.0,
                       detail={"per_case": worst, "tolerances": tols,
                               "delta_is": "max deviation / case tolerance"})


# --------------------------------------------------------------------------
# 6. forward closed forms vs quadrature

@register("forward_closed_forms", 6, tags=("attention", "forward"))
def check_forward() -> CheckResult:
    rng = np.random.default_rng(6)
    tols = {"softmax_1d": 1e-10, "softmax_2d": 1e-8, "sparsemax_1d": 1e-10,
            "sparsemax_2d": 1e-6, "angular_refinement": 1e-7}
    worst = dict.fromkeys(tols, 0.0)
    for _ in range(10):
        for alpha, dim in ((1, 1), (1, 2), (2, 1), (2, 2)):
            score, basis = random_attention_config(rng, alpha, dim)
            r = att.forward(score, basis, alpha)
            rq = oracle.attention_forward_quadrature(score, basis, alpha)
            key = f"{'softmax' if alpha == 1 else 'sparsemax'}_{dim}d"
            worst[key] = max(worst[key], np.abs(r - rq).max())
            if (alpha, dim) == (2, 2):
                r64 = att.forward_sparsemax_2d(score, basis, angular_nodes=64)
                worst["angular_refinement"] = max(worst["angular_refinement"], np.abs(r64 - r).max())
    ratio = max(worst[k] / tols[k] for k in tols)
    return CheckResult("forward_closed_forms", 6, ratio <= 1, ratio, 1.0,
                       detail={"per_case": worst, "tolerances": tols,
                               "delta_is": "max deviation / case tolerance"})


# --------------------------------------------------------------------------
# 7. discrete equivalences

def support_stable(f, step=1e-6) -> bool:
    """Sparsemax support unchanged under every +-2 step coordinate perturbation."""
    f = np.asarray(f, dtype=float)
    base = discrete.sparsemax(f).support_mask
    for i in range(f.size):
        for sgn in (-2.0, 2.0):
            g = f.copy()
            g[i] += sgn * step
            if not np.array_equal(discrete.sparsemax(g).support_mask, base):
                return False
    return True


@register("discrete_equivalences", 7, tags=("discrete",))
def check_discrete() -> CheckResult:
    rng = np.random.default_rng(7)
    worst = {"bruteforce_grid": 0.0, "bruteforce_random": 0.0, "entmax2_sparsemax": 0.0,
             "entmax1_softmax": 0.0, "jacobian_fd": 0.0}
    for L in range(1, 7):
        for f in itertools.product((-1.0, -0.5, 0.0, 0.5, 1.0), repeat=L):
            d = np.abs(discrete.sparsemax(f).probs - oracle.simplex_projection_bruteforce(f).probs).max()
            worst["bruteforce_grid"] = max(worst["bruteforce_grid"], d)
    for _ in range(500):
        f = rng.normal(scale=rng.choice([0.1, 1.0, 3.0]), size=int(rng.integers(1, 9)))
        d = np.abs(discrete.sparsemax(f).probs - oracle.simplex_projection_bruteforce(f).probs).max()
        worst["bruteforce_random"] = max(worst["bruteforce_random"], d)
    checked = 0
    for _ in range(100):
        f = rng.normal(size=int(rng.integers(2, 12)))
        worst["entmax2_sparsemax"] = max(worst["entmax2_sparsemax"],
                                         np.abs(discrete.alpha_entmax(f, 2.0).probs - discrete.sparsemax(f).probs).max())
        worst["entmax1_softmax"] = max(worst["entmax1_softmax"],
                                       np.abs(discrete.alpha_entmax(f, 1.0001).probs - discrete.softmax(f).probs).max())
        for kind, fn in (("softmax", discrete.softmax), ("sparsemax", discrete.sparsemax)):
            if kind == "sparsemax" and not support_stable(f):
                continue
            Jf = oracle.finite_diff_jacobian(lambda x: fn(x).probs, f)
            worst["jacobian_fd"] = max(worst["jacobian_fd"], np.abs(discrete.jacobian_discrete(f, kind) - Jf).max())
            checked += 1
    tols = {"bruteforce_grid": 1e-10, "bruteforce_random": 1e-10, "entmax2_sparsemax": 1e-10,
            "entmax1_softmax": 1e-3, "jacobian_fd": 1e-6}
    ratio = max(worst[k] / tols[k] for k in tols)
    return CheckResult("discrete_equivalences", 7, ratio <= 1, ratio, 1.0,
                       detail={"per_case": worst, "tolerances": tols, "jacobians_checked": checked,
                               "delta_is": "max deviation / case tolerance"})


# --------------------------------------------------------------------------
# 8. ridge fit optimality

@register("ridge_optimality", 8, tags=("value", "ridge"))
def check_ridge() -> CheckResult:
    rng = np.random.default_rng(8)
    deltas = []
    for _ in range(20):
        L, N, D = int(rng.integers(10, 60)), int(rng.integers(2, 20)), int(rng.integers(1, 10))
        ridge = float(10 ** rng.uniform(-6, 0))
        basis = att.RBFBasis.linear_1d(N, float(rng.choice([0.1, 0.5])))
        H = rng.normal(size=(D, L))
        t = sequence_locations(L)
        B = fit(ObservationMatrix(H, t), basis, ridge).B
        F = design_matrix(basis, t)
        resid = np.linalg.norm(B @ (F @ F.T + ridge * np.eye(N)) - H @ F.T)
        deltas.append(resid / (1.0 + np.linalg.norm(H)))
    # exact recovery: H = C F with F of full row rank
    basis = att.RBFBasis.linear_1d(6, 0.1)
    t = sequence_locations(40)
    F = design_matrix(basis, t)
    C = rng.normal(size=(3, 6))
    H = C @ F
    B = H @ precompute_G(F, 0.0)
    exact = np.linalg.norm(B @ F - H)
    return _result("ridge_optimality", 8, deltas + [exact], 1e-8, exact_recovery=exact,
                   worst_normal_equation=max(deltas))


# --------------------------------------------------------------------------
# 9. end-to-end demo gradient

@register("demo_gradient", 9, time_limit=60.0, tags=("demo", "gradient"))
def check_demo_gradient() -> CheckResult:
    deltas = {}
    for alpha in (1, 2):
        for seed in (42, 43, 44):
            rep = run_demo(DemoConfig(alpha=alpha, seed=seed))
            deltas[f"alpha={alpha},seed={seed}"] = rep.grad_delta
    return _result("demo_gradient", 9, list(deltas.values()), 1e-4, per_run=deltas)


# --------------------------------------------------------------------------
# 10. sparsity of alpha = 2 attention

@register("sparsity_locality", 10, tags=("attention", "sparsity"))
def check_sparsity() -> CheckResult:
    detail = {}
    # 1D: support [0.5 - a, 0.5 + a], a ~ 0.25; far basis at 3.0 with std 0.05
    s1 = dens.CanonicalScore1D.from_moments(0.5, 0.01)
    b1 = att.RBFBasis(np.array([[0.5], [3.0]]), np.array([[[0.0025]], [[0.0025]]]))
    # 2D: support radius ~ 0.27; far basis at distance 1 with std ~ 0.03
    s2 = dens.CanonicalScore2D.from_moments([0.5, 0.5], 0.01 * np.eye(2))
    b2 = att.RBFBasis(np.array([[0.5, 0.5], [1.5, 0.5]]), np.array([1e-3 * np.eye(2)] * 2))
    sparse_far, dense_far = [], []
    for tag, score, basis in (("1d", s1, b1), ("2d", s2, b2)):
        r2 = att.forward(score, basis, 2)
        r1 = att.forward(score, basis, 1)
        detail[tag] = {"sparsemax_far": float(r2[1]), "softmax_far": float(r1[1]),
                       "sparsemax_near": float(r2[0])}
        sparse_far.append(r2[1])
        dense_far.append(r1[1])
    passed = max(sparse_far) < 1e-12 and min(dense_far) > 0 and min(sparse_far) >= 0
    return CheckResult("sparsity_locality", 10, bool(passed), float(max(sparse_far)), 1e-12, detail=detail)


def run_checks(pattern: str | None = None) -> list[CheckResult]:
    selected = [c for c in REGISTRY if c.matches(pattern)]
    results = [c.run() for c in selected]
    return sorted(results, key=lambda r: (r.criterion, r.name))
