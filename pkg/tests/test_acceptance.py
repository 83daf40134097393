"""Acceptance suite: every criterion at full scale, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s``. The desk-scale experiment
(criteria 7 and 8) dominates the runtime; stated budgets assume 8 workers.
"""

import filecmp
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest
from scipy.special import expit

from mtsae.design import (
    inclusion_probabilities,
    scale_weights,
    systematic_pps_sample,
)
from mtsae.gibbs import (
    BinomialUnivariateSampler,
    GaussianUnivariateSampler,
    ModelChain,
    MultitypeSampler,
    Priors,
)
from mtsae.harness import RunConfig, SyntheticSpec, run_simulation
from mtsae.metrics import interval_score
from mtsae.pg import PGParams, draw_pg, pg_mean
from mtsae.poststrat import gaussian_poststrat, gaussian_poststrat_aggregate
from mtsae.spatial_basis import adjacency_eigenbasis

DESK_SEED = 4


def _line(criterion, ok, detail, t0, capsys=None):
    status = "PASS" if ok else "FAIL"
    message = f"\n[criterion {criterion}] {status}: {detail} ({time.time() - t0:.1f}s)"
    if capsys is not None:
        with capsys.disabled():
            print(message, flush=True)
    else:
        print(message, flush=True)


# ---------------------------------------------------------------------------
# criterion 1: PG moment suite


def _pg_moments(args):
    b, c, n, seed = args
    rng = np.random.default_rng(seed)
    chunk = 50_000
    total = 0.0
    total_sq = 0.0
    for _ in range(n // chunk):
        draws = draw_pg(np.full(chunk, b), np.full(chunk, c), rng)
        total += draws.sum()
        total_sq += (draws * draws).sum()
    mean = total / n
    var = total_sq / n - mean * mean
    return mean, var, np.sqrt(var / n)


def _pg_sum_moments(args):
    b1, b2, c, n, seed = args
    rng = np.random.default_rng(seed)
    chunk = 50_000
    total = 0.0
    total_sq = 0.0
    for _ in range(n // chunk):
        draws = draw_pg(np.full(chunk, b1), np.full(chunk, c), rng)
        draws = draws + draw_pg(np.full(chunk, b2), np.full(chunk, c), rng)
        total += draws.sum()
        total_sq += (draws * draws).sum()
    mean = total / n
    var = total_sq / n - mean * mean
    return mean, var, np.sqrt(var / n)


def _run_tasks(fn, tasks):
    workers = min(8, os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def test_criterion_1_pg_moment_suite(capsys):
    t0 = time.time()
    n = 10**6
    grid = [(b, c) for b in (1.0, 2.0, 2.5, 0.3) for c in (0.0, 0.5, 2.0, -2.0)]
    results = _run_tasks(_pg_moments,
                         [(b, c, n, 1000 + i) for i, (b, c) in enumerate(grid)])
    worst = 0.0
    for (b, c), (mean, _, se) in zip(grid, results):
        z = abs(mean - pg_mean(PGParams(b, c))) / se
        worst = max(worst, z)
    grid_ok = worst < 4.0

    # symmetry in the sign of c: equal first two moments
    (m_pos, v_pos, se_pos), (m_neg, v_neg, se_neg) = _run_tasks(
        _pg_moments, [(1.7, 2.0, n, 7001), (1.7, -2.0, n, 7002)])
    z_sym_mean = abs(m_pos - m_neg) / np.sqrt(se_pos**2 + se_neg**2)
    se_v = np.sqrt(2.0 / n) * (v_pos + v_neg)
    z_sym_var = abs(v_pos - v_neg) / se_v
    sym_ok = z_sym_mean < 4.0 and z_sym_var < 4.0

    # additivity: PG(1, c) + PG(1.5, c) matches PG(2.5, c)
    (m_sum, v_sum, se_sum), = _run_tasks(_pg_sum_moments, [(1.0, 1.5, 0.7, n, 7003)])
    (m_one, v_one, se_one), = _run_tasks(_pg_moments, [(2.5, 0.7, n, 7004)])
    z_add_mean = abs(m_sum - m_one) / np.sqrt(se_sum**2 + se_one**2)
    z_add_var = abs(v_sum - v_one) / (np.sqrt(2.0 / n) * (v_sum + v_one))
    add_ok = z_add_mean < 4.0 and z_add_var < 4.0

    ok = grid_ok and sym_ok and add_ok
    _line(1, ok, f"grid max |z|={worst:.2f}; symmetry z=({z_sym_mean:.2f},{z_sym_var:.2f}); "
                 f"additivity z=({z_add_mean:.2f},{z_add_var:.2f})", t0, capsys)
    assert grid_ok and sym_ok and add_ok


# ---------------------------------------------------------------------------
# criterion 2: full-conditional oracles


def _dense_inv(Q):
    return np.linalg.inv(Q)


def test_criterion_2_conditional_oracles(capsys):
    t0 = time.time()
    rng = np.random.default_rng(42)
    n, p, q = 9, 3, 3
    X1 = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    X2 = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    phi = rng.normal(size=(n, q))
    w = rng.uniform(0.4, 2.2, size=n)
    z1 = rng.normal(size=n)
    trials = rng.integers(1, 4, size=n).astype(float)
    z2 = rng.integers(0, trials + 1).astype(float)
    priors = Priors(sigma_beta=5.0, a_eps=3.0, b_eps=2.0, a_eta=3.0, b_eta=2.5,
                    a_zeta=3.0, b_zeta=1.5, a_u=3.0, b_u=2.0, sigma_tau2=0.7)

    worst = 0.0

    def check(got, want):
        nonlocal worst
        worst = max(worst, float(np.max(np.abs(np.asarray(got) - np.asarray(want)))))

    # Gaussian univariate: beta, U, sigma2, sigma_u2
    gs = GaussianUnivariateSampler(z1, X1, phi, w, priors, rng=np.random.default_rng(1))
    gs.set_state(beta=rng.normal(size=p), u=rng.normal(size=q), sigma2=0.7, sigma_u2=1.4)
    D = np.diag(w / gs.sigma2)
    V = _dense_inv(X1.T @ D @ X1 + np.eye(p) / priors.sigma_beta**2)
    Q, h = gs.beta_conditional()
    check(_dense_inv(Q), V)
    check(np.linalg.solve(Q, h), V @ X1.T @ D @ (z1 - phi @ gs.u))
    V = _dense_inv(phi.T @ D @ phi + np.eye(q) / gs.sigma_u2)
    Q, h = gs.u_conditional()
    check(_dense_inv(Q), V)
    check(np.linalg.solve(Q, h), V @ phi.T @ D @ (z1 - X1 @ gs.beta))
    resid = z1 - X1 @ gs.beta - phi @ gs.u
    shape, rate = gs.sigma2_conditional()
    check([shape, rate], [priors.a_eps + 0.5 * w.sum(),
                          priors.b_eps + 0.5 * (w * resid**2).sum()])
    shape, rate = gs.sigma_u2_conditional()
    check([shape, rate], [priors.a_u + q / 2.0, priors.b_u + 0.5 * gs.u @ gs.u])

    # binomial univariate: beta2, U
    bs = BinomialUnivariateSampler(z2, trials, X2, phi, w, priors,
                                   rng=np.random.default_rng(2))
    bs.set_state(beta=rng.normal(size=p), u=rng.normal(size=q), sigma_u2=0.9)
    bs.omega = rng.uniform(0.2, 1.4, size=n)
    Om = np.diag(bs.omega)
    z = bs.kappa / bs.omega
    V = _dense_inv(X2.T @ Om @ X2 + np.eye(p) / priors.sigma_beta**2)
    Q, h = bs.beta_conditional()
    check(_dense_inv(Q), V)
    check(np.linalg.solve(Q, h), V @ X2.T @ Om @ (z - phi @ bs.u))
    V = _dense_inv(phi.T @ Om @ phi + np.eye(q) / bs.sigma_u2)
    Q, h = bs.u_conditional()
    check(_dense_inv(Q), V)
    check(np.linalg.solve(Q, h), V @ phi.T @ Om @ (z - X2 @ bs.beta))

    # multitype: beta1, beta2, eta, zeta, tau1 and the variance components
    ms = MultitypeSampler(z1, z2, trials, X1, X2, phi, w, priors,
                          rng=np.random.default_rng(3))
    ms.set_state(beta1=rng.normal(size=p), beta2=rng.normal(size=p),
                 eta=rng.normal(size=q), zeta=rng.normal(size=q),
                 tau1=0.6, sigma2=0.8, sigma_eta2=1.2, sigma_zeta2=0.7)
    ms.omega = rng.uniform(0.2, 1.4, size=n)
    Om = np.diag(ms.omega)
    W = np.diag(w)
    D = W / ms.sigma2
    z = ms.kappa / ms.omega
    kappa = w * (z2 - trials / 2.0)

    V = _dense_inv(X1.T @ D @ X1 + np.eye(p) / priors.sigma_beta**2)
    Q, h = ms.beta1_conditional()
    check(_dense_inv(Q), V)
    check(np.linalg.solve(Q, h), V @ X1.T @ D @ (z1 - ms.tau1 * (phi @ ms.eta)))

    V = _dense_inv(X2.T @ Om @ X2 + np.eye(p) / priors.sigma_beta**2)
    Q, h = ms.beta2_conditional()
    check(_dense_inv(Q), V)
    check(np.linalg.solve(Q, h), V @ X2.T @ Om @ (z - phi @ ms.eta - phi @ ms.zeta))

    q_gauss = phi.T @ (W / ms.sigma2) @ phi
    q_binom = phi.T @ Om @ phi
    V = _dense_inv(ms.tau1**2 * q_gauss + q_binom + np.eye(q) / ms.sigma_eta2)
    hw = (ms.tau1 / ms.sigma2) * (phi.T @ W @ (z1 - X1 @ ms.beta1))
    hw = hw + phi.T @ kappa - phi.T @ Om @ (X2 @ ms.beta2 + phi @ ms.zeta)
    Q, h = ms.eta_conditional()
    check(_dense_inv(Q), V)
    check(np.linalg.solve(Q, h), V @ hw)

    V = _dense_inv(q_binom + np.eye(q) / ms.sigma_zeta2)
    Q, h = ms.zeta_conditional()
    check(_dense_inv(Q), V)
    check(np.linalg.solve(Q, h), V @ (phi.T @ Om @ (z - X2 @ ms.beta2 - phi @ ms.eta)))

    v = phi @ ms.eta
    prec_want = v @ D @ v + 1.0 / priors.sigma_tau2
    prec, shift = ms.tau1_conditional()
    check(prec, prec_want)
    check(shift / prec, (v @ D @ (z1 - X1 @ ms.beta1)) / prec_want)

    resid = z1 - X1 @ ms.beta1 - ms.tau1 * (phi @ ms.eta)
    check(list(ms.sigma2_conditional()),
          [priors.a_eps + 0.5 * w.sum(), priors.b_eps + 0.5 * (w * resid**2).sum()])
    check(list(ms.sigma_eta2_conditional()),
          [priors.a_eta + q / 2.0, priors.b_eta + 0.5 * ms.eta @ ms.eta])
    check(list(ms.sigma_zeta2_conditional()),
          [priors.a_zeta + q / 2.0, priors.b_zeta + 0.5 * ms.zeta @ ms.zeta])
    oracle_ok = worst < 1e-10

    # 1e5 repeated draws of each variance component against its IG mean
    worst_z = 0.0
    for sampler, name in ((gs, "sigma2"), (gs, "sigma_u2"), (ms, "sigma_eta2"),
                          (ms, "sigma_zeta2")):
        shape, rate = getattr(sampler, f"{name}_conditional")()
        draws = np.empty(100_000)
        update = getattr(sampler, f"_update_{name}")
        keep = getattr(sampler, name)
        for i in range(draws.size):
            update()
            draws[i] = getattr(sampler, name)
        sampler.set_state(**{name: keep})  # restore so later blocks are unchanged
        want = rate / (shape - 1.0)
        z_score = abs(draws.mean() - want) / (draws.std(ddof=1) / np.sqrt(draws.size))
        worst_z = max(worst_z, z_score)
    moment_ok = worst_z < 4.0

    ok = oracle_ok and moment_ok
    _line(2, ok, f"max dense-oracle gap={worst:.2e}; variance-draw max |z|={worst_z:.2f}", t0, capsys)
    assert oracle_ok
    assert moment_ok


# ---------------------------------------------------------------------------
# criterion 3: Geweke joint-distribution test


def _geweke_priors():
    return Priors(sigma_beta=0.8, a_eps=4.0, b_eps=3.0, a_eta=4.0, b_eta=3.0,
                  a_zeta=4.0, b_zeta=3.0, a_u=4.0, b_u=3.0, sigma_tau2=0.5)


def _geweke_design():
    A = np.zeros((4, 4))
    for i in range(3):
        A[i, i + 1] = A[i + 1, i] = 1.0
    basis = adjacency_eigenbasis(A)  # 4-node path: exactly two positive eigenvalues
    area_idx = np.repeat(np.arange(4), 5)
    phi = basis.B[area_idx, :]
    X = np.ones((20, 1))
    trials = np.full(20, 2.0)
    weights = np.ones(20)
    return X, phi, trials, weights


def _prior_draw(rng, priors, q):
    sigma2 = 1.0 / rng.gamma(priors.a_eps, 1.0 / priors.b_eps)
    sigma_eta2 = 1.0 / rng.gamma(priors.a_eta, 1.0 / priors.b_eta)
    sigma_zeta2 = 1.0 / rng.gamma(priors.a_zeta, 1.0 / priors.b_zeta)
    return {
        "beta1": rng.normal(0.0, priors.sigma_beta, size=1),
        "beta2": rng.normal(0.0, priors.sigma_beta, size=1),
        "eta": rng.normal(0.0, np.sqrt(sigma_eta2), size=q),
        "zeta": rng.normal(0.0, np.sqrt(sigma_zeta2), size=q),
        "tau1": rng.normal(0.0, np.sqrt(priors.sigma_tau2)),
        "sigma2": sigma2,
        "sigma_eta2": sigma_eta2,
        "sigma_zeta2": sigma_zeta2,
    }


def _simulate_responses(rng, state, X, phi, trials):
    mean = X @ state["beta1"] + state["tau1"] * (phi @ state["eta"])
    z1 = mean + np.sqrt(state["sigma2"]) * rng.standard_normal(X.shape[0])
    psi = X @ state["beta2"] + phi @ (state["eta"] + state["zeta"])
    z2 = rng.binomial(trials.astype(np.int64), expit(psi)).astype(float)
    return z1, z2


_GEWEKE_FIELDS = ("beta1", "beta2", "tau1", "sigma2", "sigma_eta2", "sigma_zeta2")


def _monitor(state):
    values = [float(np.ravel(state[name])[0]) for name in _GEWEKE_FIELDS]
    values += [values[0] ** 2, values[1] ** 2, values[2] ** 2]
    return values


def test_criterion_3_geweke_multitype(capsys):
    t0 = time.time()
    sweeps = 50_000
    X, phi, trials, weights = _geweke_design()
    priors = _geweke_priors()
    q = phi.shape[1]

    # marginal-conditional: iid prior draws
    rng_mc = np.random.default_rng(101)
    mc = np.array([_monitor(_prior_draw(rng_mc, priors, q)) for _ in range(sweeps)])

    # successive-conditional: Gibbs sweep then data re-simulation
    rng_sc = np.random.default_rng(202)
    state = _prior_draw(rng_sc, priors, q)
    z1, z2 = _simulate_responses(rng_sc, state, X, phi, trials)
    psi = X @ state["beta2"] + phi @ (state["eta"] + state["zeta"])
    omega = draw_pg(weights * trials, psi, rng_sc)
    sampler = MultitypeSampler(z1, z2, trials, X, X, phi, weights, priors,
                               rng=rng_sc, init_state={**state, "omega": omega})
    sc = np.empty((sweeps, len(_GEWEKE_FIELDS) + 3))
    for t in range(sweeps):
        sampler.sweep()
        z1, z2 = _simulate_responses(rng_sc, sampler.state(), X, phi, trials)
        sampler.set_responses(z1=z1, z2=z2)
        sc[t] = _monitor(sampler.state())

    # batch means absorb the successive chain's autocorrelation
    n_batches = 100
    batches = sc[: sweeps - sweeps % n_batches].reshape(n_batches, -1, sc.shape[1])
    batch_means = batches.mean(axis=1)
    se_sc = batch_means.std(axis=0, ddof=1) / np.sqrt(n_batches)
    se_mc = mc.std(axis=0, ddof=1) / np.sqrt(sweeps)
    z_scores = (sc.mean(axis=0) - mc.mean(axis=0)) / np.sqrt(se_sc**2 + se_mc**2)

    names = list(_GEWEKE_FIELDS) + ["beta1^2", "beta2^2", "tau1^2"]
    worst = float(np.max(np.abs(z_scores)))
    ok = worst < 4.0
    detail = ", ".join(f"{n}={z:+.2f}" for n, z in zip(names, z_scores))
    _line(3, ok, f"max |z|={worst:.2f} [{detail}]", t0, capsys)
    assert ok


# ---------------------------------------------------------------------------
# criterion 4: poststratification route equivalence


def test_criterion_4_poststrat_equivalence(capsys):
    t0 = time.time()
    T = 100_000
    rng = np.random.default_rng(55)
    chain = ModelChain(
        model_kind="multitype",
        params={
            "beta1": np.column_stack([rng.normal(0.4, 0.05, T), rng.normal(0.1, 0.03, T)]),
            "beta2": np.zeros((T, 2)),
            "eta": rng.normal(0.0, 0.2, size=(T, 1)),
            "zeta": np.zeros((T, 1)),
            "tau1": rng.normal(1.0, 0.1, T),
            "sigma2": 1.0 / rng.gamma(20.0, 1.0 / 2.0, T),
        },
        n_iter=T, n_burn=0, seed=0)
    from mtsae.data_model import AreaSet, PoststratCell

    areas = AreaSet(labels=(0,), adjacency=np.zeros((1, 1)))
    basis = np.array([[0.6]])
    cells = []
    for x, count in (((1.0, 0.0), 40), ((1.0, 1.0), 25), ((1.0, 0.5), 90)):
        arr = np.asarray(x)
        cells.append(PoststratCell(0, arr, arr.copy(), count))

    d1 = gaussian_poststrat(chain, cells, areas, basis, np.random.default_rng(7))[0].draws
    d2 = gaussian_poststrat_aggregate(chain, cells, areas, basis,
                                      np.random.default_rng(8))[0].draws
    z_mean = abs(d1.mean() - d2.mean()) / np.sqrt(d1.var() / T + d2.var() / T)
    z_var = abs(d1.var() - d2.var()) / (np.sqrt(2.0 / T) * (d1.var() + d2.var()))
    ok = z_mean < 4.0 and z_var < 4.0
    _line(4, ok, f"mean z={z_mean:.2f}, var z={z_var:.2f} at T={T}", t0, capsys)
    assert ok


# ---------------------------------------------------------------------------
# criterion 5: design suite


def test_criterion_5_design_suite(capsys):
    t0 = time.time()
    rng = np.random.default_rng(31)
    M = rng.uniform(0.5, 5.0, size=10)
    pi = inclusion_probabilities(M, 4)

    size_ok = True
    for seed in range(500):
        picked = systematic_pps_sample(pi, np.random.default_rng(seed))
        if picked.size != 4 or np.unique(picked).size != 4:
            size_ok = False

    reps = 20_000
    hits = np.zeros(10)
    rng_mc = np.random.default_rng(77)
    for _ in range(reps):
        hits[systematic_pps_sample(pi, rng_mc)] += 1
    freq = hits / reps
    band = 3.0 * np.sqrt(pi * (1.0 - pi) / reps)
    freq_ok = bool((np.abs(freq - pi) <= band).all())
    worst = float(np.max(np.abs(freq - pi) / band))

    scale_ok = True
    for _ in range(50):
        w = rng.uniform(0.05, 30.0, size=rng.integers(2, 200))
        if abs(scale_weights(w).sum() - w.size) > 1e-10 * w.size:
            scale_ok = False

    ok = size_ok and freq_ok and scale_ok
    _line(5, ok, f"exact size over 500 seeds={size_ok}; inclusion |dev|/band max={worst:.2f}; "
                 f"scaled-weight sums ok={scale_ok}", t0, capsys)
    assert size_ok and freq_ok and scale_ok


# ---------------------------------------------------------------------------
# criterion 6: interval-score exactness


def test_criterion_6_interval_score_exact(capsys):
    t0 = time.time()
    inside = interval_score(0.1, 0.3, 0.2, 0.05) == (0.3 - 0.1)
    over = interval_score(0.1, 0.3, 0.35, 0.05) == (0.3 - 0.1) + (2.0 / 0.05) * (0.35 - 0.3)
    under = interval_score(0.1, 0.3, 0.05, 0.05) == (0.3 - 0.1) + (2.0 / 0.05) * (0.1 - 0.05)
    ok = inside and over and under
    _line(6, ok, f"inside={inside}, overshoot={over}, undershoot={under}", t0, capsys)
    assert ok


# ---------------------------------------------------------------------------
# criteria 7 and 8: desk-scale ordering experiment and reproducibility


def _desk_config(out_dir):
    return RunConfig(
        n=500, multiplier=5.0, replicates=50, n_iter=2000, n_burn=1000,
        seed=DESK_SEED, methods=("ht", "univariate", "multitype"),
        threads=8, out_dir=str(out_dir),
        synth=SyntheticSpec(N=20_000, rows=4, cols=5),
    )


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_run_1")
    t0 = time.time()
    report = run_simulation(_desk_config(out))
    return report, out, time.time() - t0


def test_criterion_7_desk_scale_ordering(desk_run, capsys):
    report, _, elapsed = desk_run
    t0 = time.time() - elapsed
    hg = report.row("ht", "gaussian")
    ug = report.row("univariate", "gaussian")
    mg = report.row("multitype", "gaussian")
    hb = report.row("ht", "bernoulli")
    ub = report.row("univariate", "bernoulli")
    mb = report.row("multitype", "bernoulli")

    order_g = mg.mse < ug.mse < hg.mse
    ratio_g = mg.mse / ug.mse < 0.8
    order_b = (mb.mse <= 1.05 * ub.mse) and mb.mse < hb.mse and ub.mse < hb.mse
    coverages = [ug.coverage, mg.coverage, ub.coverage, mb.coverage]
    cover_ok = all(0.85 <= c <= 0.98 for c in coverages)
    is_ok = mg.interval_score <= ug.interval_score

    ok = order_g and ratio_g and order_b and cover_ok and is_ok
    _line(7, ok,
          f"gaussian mse ht/uni/multi={hg.mse:.3e}/{ug.mse:.3e}/{mg.mse:.3e} "
          f"(multi/uni={mg.mse / ug.mse:.3f}); "
          f"bernoulli mse ht/uni/multi={hb.mse:.3e}/{ub.mse:.3e}/{mb.mse:.3e}; "
          f"CR={[round(c, 3) for c in coverages]}; "
          f"gaussian IS uni/multi={ug.interval_score:.4f}/{mg.interval_score:.4f}", t0, capsys)
    assert order_g, "gaussian MSE ordering violated"
    assert ratio_g, "multitype/univariate gaussian MSE ratio not below 0.8"
    assert order_b, "bernoulli MSE requirements violated"
    assert cover_ok, f"model coverage outside [0.85, 0.98]: {coverages}"
    assert is_ok, "multitype gaussian interval score exceeds univariate"


def test_criterion_8_reproducibility(desk_run, tmp_path_factory, capsys):
    _, out1, _ = desk_run
    t0 = time.time()
    out2 = tmp_path_factory.mktemp("desk_run_2")
    run_simulation(_desk_config(out2))
    same = filecmp.cmp(out1 / "report.csv", os.path.join(out2, "report.csv"),
                       shallow=False)
    _line(8, same, "two desk-scale runs produced byte-identical report.csv", t0, capsys)
    assert same
