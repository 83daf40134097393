"""Survey-weighted pseudo-likelihood Gibbs samplers.

Three samplers share one precision-form Gaussian kernel:

* ``GaussianUnivariateSampler`` - weighted Gaussian regression with an
  area-level random effect.
* ``BinomialUnivariateSampler`` - weighted binomial (logit) regression made
  conditionally Gaussian by Polya-Gamma augmentation.
* ``MultitypeSampler`` - the joint model: a shared area-level effect enters
  both responses (scaled by tau1 in the Gaussian block) and a second,
  binomial-specific effect absorbs residual area variation.

Every unit's likelihood contribution is raised to its scaled survey weight,
so the binomial PG shapes b_i = w_i * n_i are real-valued. Each sampler
exposes its full conditionals as (precision, shift) or (shape, rate) pairs
so they can be checked against independent dense-matrix oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .pg import draw_pg


@dataclass(frozen=True)
class Priors:
    """Prior hyperparameters; all inverse-gamma pairs default to 0.1."""

    sigma_beta: float = 1000.0
    a_eps: float = 0.1
    b_eps: float = 0.1
    a_eta: float = 0.1
    b_eta: float = 0.1
    a_zeta: float = 0.1
    b_zeta: float = 0.1
    a_u: float = 0.1
    b_u: float = 0.1
    sigma_tau2: float = 1.0

    def __post_init__(self):
        for name in ("sigma_beta", "a_eps", "b_eps", "a_eta", "b_eta",
                     "a_zeta", "b_zeta", "a_u", "b_u", "sigma_tau2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"prior {name} must be positive")


@dataclass
class ModelChain:
    """Post-burn-in draws stored columnwise: one array per parameter block."""

    model_kind: str
    params: dict
    n_iter: int
    n_burn: int
    seed: int

    @property
    def n_draws(self) -> int:
        return self.n_iter - self.n_burn

    def column_table(self):
        """Flatten to (names, matrix) with one column per scalar parameter."""
        names, cols = [], []
        for key, arr in self.params.items():
            if arr.ndim == 1:
                names.append(key)
                cols.append(arr[:, None])
            else:
                names.extend(f"{key}_{j}" for j in range(arr.shape[1]))
                cols.append(arr)
        return names, np.hstack(cols) if cols else np.empty((self.n_draws, 0))

    def save(self, path):
        names, table = self.column_table()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# kind={self.model_kind} n_iter={self.n_iter} "
                     f"n_burn={self.n_burn} seed={self.seed}\n")
            fh.write(",".join(names) + "\n")
            for row in table:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "ModelChain":
        with open(path, encoding="utf-8") as fh:
            meta_line = fh.readline().strip()
            if not meta_line.startswith("# "):
                raise ValueError("chain file is missing its metadata line")
            meta = dict(item.split("=", 1) for item in meta_line[2:].split())
            names = fh.readline().strip().split(",")
            table = np.loadtxt(fh, delimiter=",", ndmin=2)
        # A digit suffix marks a vector component only when the indices for
        # that stem form 0..m-1; scalar names like sigma_u2 stay scalars.
        candidates: dict = {}
        for j, name in enumerate(names):
            stem, _, suffix = name.rpartition("_")
            if stem and suffix.isdigit():
                candidates.setdefault(stem, []).append((int(suffix), j))
        params: dict = {}
        vector_cols = set()
        for stem, pairs in candidates.items():
            indices = sorted(idx for idx, _ in pairs)
            if indices == list(range(len(indices))):
                ordered = [j for _, j in sorted(pairs)]
                params[stem] = table[:, ordered]
                vector_cols.update(ordered)
        for j, name in enumerate(names):
            if j not in vector_cols:
                params[name] = table[:, j]
        return cls(
            model_kind=meta["kind"],
            params=params,
            n_iter=int(meta["n_iter"]),
            n_burn=int(meta["n_burn"]),
            seed=int(meta["seed"]),
        )


def sample_gaussian_precision(Q, h, rng: np.random.Generator) -> np.ndarray:
    """Draw from the normal law with precision Q and mean Q^-1 h.

    Uses the Cholesky factor of Q; a non-positive-definite Q raises
    ``numpy.linalg.LinAlgError``.
    """
    Q = np.asarray(Q, float)
    h = np.asarray(h, float)
    if h.size == 0:
        return np.zeros(0)
    L = np.linalg.cholesky(Q)
    mean = solve_triangular(L.T, solve_triangular(L, h, lower=True), lower=False)
    noise = solve_triangular(L.T, rng.standard_normal(h.size), lower=False)
    return mean + noise


def _inv_gamma(shape, rate, rng):
    return 1.0 / rng.gamma(shape, 1.0 / rate)


def _as_design(phi, n):
    """Coerce per-unit basis rows to an n x q matrix (q may be zero)."""
    phi = np.asarray(phi, float)
    if phi.ndim == 2:
        return phi
    if phi.ndim == 1 and n:
        return phi.reshape(n, -1)
    return phi.reshape(n, 0)


def gaussian_pseudo_loglik(y, mu, sigma2, weights) -> float:
    """Weighted Gaussian log likelihood sum_i w_i log N(y_i | mu_i, sigma2)."""
    y = np.asarray(y, float)
    mu = np.asarray(mu, float)
    w = np.asarray(weights, float)
    dens = -0.5 * np.log(2.0 * np.pi * sigma2) - (y - mu) ** 2 / (2.0 * sigma2)
    return float((w * dens).sum())


def binomial_pseudo_loglik(y, trials, psi, weights) -> float:
    """Weighted binomial log likelihood with logit-scale linear predictor."""
    y = np.asarray(y, float)
    n = np.asarray(trials, float)
    psi = np.asarray(psi, float)
    w = np.asarray(weights, float)
    log_choose = gammaln(n + 1) - gammaln(y + 1) - gammaln(n - y + 1)
    dens = log_choose + y * psi - n * np.logaddexp(0.0, psi)
    return float((w * dens).sum())


class _SamplerBase:
    """Shared sweep/run loop; subclasses define blocks and conditionals."""

    default_order: tuple = ()
    model_kind: str = ""
    tracked: tuple = ()

    def __init__(self, rng, update_order=None):
        self.rng = rng
        self.update_order = tuple(update_order) if update_order is not None else self.default_order
        unknown = set(self.update_order) - set(self.default_order)
        if unknown:
            raise ValueError(f"unknown update block(s): {sorted(unknown)}")

    def sweep(self):
        for name in self.update_order:
            getattr(self, "_update_" + name)()

    def state(self) -> dict:
        return {name: np.copy(getattr(self, name)) for name in self.tracked}

    def set_state(self, **values):
        for name, value in values.items():
            if name not in self.tracked and name != "omega":
                raise ValueError(f"unknown state field {name!r}")
            setattr(self, name, np.asarray(value, float) if np.ndim(value) else float(value))

    def run(self, n_iter: int, n_burn: int, seed: int = 0) -> ModelChain:
        if not 0 <= n_burn < n_iter:
            raise ValueError(f"need 0 <= n_burn < n_iter, got {n_burn} >= {n_iter}")
        kept = n_iter - n_burn
        store = {name: np.empty((kept,) + np.shape(getattr(self, name))) for name in self.tracked}
        for it in range(n_iter):
            self.sweep()
            if it >= n_burn:
                for name in self.tracked:
                    store[name][it - n_burn] = getattr(self, name)
        return ModelChain(model_kind=self.model_kind, params=store,
                          n_iter=n_iter, n_burn=n_burn, seed=seed)


class GaussianUnivariateSampler(_SamplerBase):
    """Weighted Gaussian regression with area effect U, residual variance
    sigma2, and effect variance sigma_u2."""

    default_order = ("beta", "u", "sigma2", "sigma_u2")
    model_kind = "gaussian"
    tracked = ("beta", "u", "sigma2", "sigma_u2")

    def __init__(self, y, X, phi, weights, priors=None, rng=None,
                 update_order=None, init_state=None):
        super().__init__(rng or np.random.default_rng(), update_order)
        self.y = np.asarray(y, float)
        self.X = np.atleast_2d(np.asarray(X, float))
        self.phi = _as_design(phi, self.y.size)
        self.w = np.asarray(weights, float)
        self.priors = priors or Priors()
        self.p = self.X.shape[1]
        self.q = self.phi.shape[1]

        # Weight-scaled cross products; D = diag(w)/sigma2 factors out of these.
        self.wX = self.X * self.w[:, None]
        self.XtWX = self.X.T @ self.wX
        self.wPhi = self.phi * self.w[:, None]
        self.PhiTWPhi = self.phi.T @ self.wPhi
        self.w_sum = self.w.sum()

        self.beta = np.zeros(self.p)
        self.u = np.zeros(self.q)
        self.sigma2 = 1.0
        self.sigma_u2 = 1.0
        if init_state:
            self.set_state(**init_state)

    def set_responses(self, y):
        self.y = np.asarray(y, float)

    def beta_conditional(self):
        prec = self.XtWX / self.sigma2 + np.eye(self.p) / self.priors.sigma_beta**2
        shift = self.wX.T @ (self.y - self.phi @ self.u) / self.sigma2
        return prec, shift

    def u_conditional(self):
        prec = self.PhiTWPhi / self.sigma2 + np.eye(self.q) / self.sigma_u2
        shift = self.wPhi.T @ (self.y - self.X @ self.beta) / self.sigma2
        return prec, shift

    def sigma2_conditional(self):
        resid = self.y - self.X @ self.beta - self.phi @ self.u
        return (self.priors.a_eps + 0.5 * self.w_sum,
                self.priors.b_eps + 0.5 * (self.w * resid**2).sum())

    def sigma_u2_conditional(self):
        return (self.priors.a_u + 0.5 * self.q,
                self.priors.b_u + 0.5 * (self.u @ self.u))

    def _update_beta(self):
        self.beta = sample_gaussian_precision(*self.beta_conditional(), self.rng)

    def _update_u(self):
        self.u = sample_gaussian_precision(*self.u_conditional(), self.rng)

    def _update_sigma2(self):
        self.sigma2 = _inv_gamma(*self.sigma2_conditional(), self.rng)

    def _update_sigma_u2(self):
        self.sigma_u2 = _inv_gamma(*self.sigma_u2_conditional(), self.rng)

    def pseudo_log_likelihood(self) -> float:
        return gaussian_pseudo_loglik(self.y, self.X @ self.beta + self.phi @ self.u,
                                      self.sigma2, self.w)


class BinomialUnivariateSampler(_SamplerBase):
    """Weighted binomial logit regression with PG augmentation.

    Per unit: b_i = w_i * n_i, kappa_i = w_i (y_i - n_i / 2); conditional on
    omega the likelihood is Gaussian in the linear predictor.
    """

    default_order = ("beta", "u", "omega", "sigma_u2")
    model_kind = "binomial"
    tracked = ("beta", "u", "sigma_u2")

    def __init__(self, y, trials, X, phi, weights, priors=None, rng=None,
                 update_order=None, init_state=None):
        super().__init__(rng or np.random.default_rng(), update_order)
        self.y = np.asarray(y, float)
        self.trials = np.asarray(trials, float)
        self.X = np.atleast_2d(np.asarray(X, float))
        self.phi = _as_design(phi, self.y.size)
        self.w = np.asarray(weights, float)
        self.priors = priors or Priors()
        self.p = self.X.shape[1]
        self.q = self.phi.shape[1]

        self.b_pg = self.w * self.trials
        self._refresh_kappa()

        self.beta = np.zeros(self.p)
        self.u = np.zeros(self.q)
        self.sigma_u2 = 1.0
        if init_state and "omega" in init_state:
            self.omega = np.asarray(init_state["omega"], float)
        else:
            self.omega = draw_pg(self.b_pg, np.zeros_like(self.b_pg), self.rng)
        if init_state:
            self.set_state(**{k: v for k, v in init_state.items() if k != "omega"})

    def _refresh_kappa(self):
        self.kappa = self.w * (self.y - self.trials / 2.0)
        self.Xt_kappa = self.X.T @ self.kappa
        self.Phit_kappa = self.phi.T @ self.kappa

    def set_responses(self, y):
        self.y = np.asarray(y, float)
        self._refresh_kappa()

    def linear_predictor(self):
        return self.X @ self.beta + self.phi @ self.u

    def beta_conditional(self):
        oX = self.X * self.omega[:, None]
        prec = oX.T @ self.X + np.eye(self.p) / self.priors.sigma_beta**2
        shift = self.Xt_kappa - oX.T @ (self.phi @ self.u)
        return prec, shift

    def u_conditional(self):
        oPhi = self.phi * self.omega[:, None]
        prec = oPhi.T @ self.phi + np.eye(self.q) / self.sigma_u2
        shift = self.Phit_kappa - oPhi.T @ (self.X @ self.beta)
        return prec, shift

    def sigma_u2_conditional(self):
        return (self.priors.a_u + 0.5 * self.q,
                self.priors.b_u + 0.5 * (self.u @ self.u))

    def _update_beta(self):
        self.beta = sample_gaussian_precision(*self.beta_conditional(), self.rng)

    def _update_u(self):
        self.u = sample_gaussian_precision(*self.u_conditional(), self.rng)

    def _update_omega(self):
        self.omega = draw_pg(self.b_pg, self.linear_predictor(), self.rng)

    def _update_sigma_u2(self):
        self.sigma_u2 = _inv_gamma(*self.sigma_u2_conditional(), self.rng)

    def pseudo_log_likelihood(self) -> float:
        return binomial_pseudo_loglik(self.y, self.trials, self.linear_predictor(), self.w)


class MultitypeSampler(_SamplerBase):
    """Joint Gaussian + binomial sampler with shared area effect eta.

    The Gaussian mean is X1 beta1 + tau1 Phi eta; the binomial logit is
    X2 beta2 + Phi eta + Phi zeta. The eta update pools the weighted Gaussian
    information tau1^2 Phi' W Phi / sigma2 with the PG information
    Phi' Omega Phi; omega is refreshed last in a sweep.
    """

    default_order = ("beta1", "beta2", "eta", "zeta", "tau1", "sigma2",
                     "sigma_eta2", "sigma_zeta2", "omega")
    model_kind = "multitype"
    tracked = ("beta1", "beta2", "eta", "zeta", "tau1", "sigma2",
               "sigma_eta2", "sigma_zeta2")

    def __init__(self, z1, z2, trials, X1, X2, phi, weights, priors=None,
                 rng=None, update_order=None, init_state=None):
        super().__init__(rng or np.random.default_rng(), update_order)
        self.z1 = np.asarray(z1, float)
        self.z2 = np.asarray(z2, float)
        self.trials = np.asarray(trials, float)
        self.X1 = np.atleast_2d(np.asarray(X1, float))
        self.X2 = np.atleast_2d(np.asarray(X2, float))
        self.phi = _as_design(phi, self.z1.size)
        self.w = np.asarray(weights, float)
        self.priors = priors or Priors()
        self.p1 = self.X1.shape[1]
        self.p2 = self.X2.shape[1]
        self.q = self.phi.shape[1]

        self.wX1 = self.X1 * self.w[:, None]
        self.X1tWX1 = self.X1.T @ self.wX1
        self.wPhi = self.phi * self.w[:, None]
        self.PhiTWPhi = self.phi.T @ self.wPhi
        self.w_sum = self.w.sum()
        self.b_pg = self.w * self.trials
        self._refresh_kappa()

        self.beta1 = np.zeros(self.p1)
        self.beta2 = np.zeros(self.p2)
        self.eta = np.zeros(self.q)
        self.zeta = np.zeros(self.q)
        self.tau1 = 1.0
        self.sigma2 = 1.0
        self.sigma_eta2 = 1.0
        self.sigma_zeta2 = 1.0
        if init_state and "omega" in init_state:
            self.omega = np.asarray(init_state["omega"], float)
        else:
            self.omega = draw_pg(self.b_pg, np.zeros_like(self.b_pg), self.rng)
        if init_state:
            self.set_state(**{k: v for k, v in init_state.items() if k != "omega"})

    def _refresh_kappa(self):
        self.kappa = self.w * (self.z2 - self.trials / 2.0)
        self.X2t_kappa = self.X2.T @ self.kappa
        self.Phit_kappa = self.phi.T @ self.kappa

    def set_responses(self, z1=None, z2=None):
        if z1 is not None:
            self.z1 = np.asarray(z1, float)
        if z2 is not None:
            self.z2 = np.asarray(z2, float)
            self._refresh_kappa()

    def linear_predictor_binomial(self):
        return self.X2 @ self.beta2 + self.phi @ (self.eta + self.zeta)

    def mean_gaussian(self):
        return self.X1 @ self.beta1 + self.tau1 * (self.phi @ self.eta)

    def beta1_conditional(self):
        prec = self.X1tWX1 / self.sigma2 + np.eye(self.p1) / self.priors.sigma_beta**2
        shift = self.wX1.T @ (self.z1 - self.tau1 * (self.phi @ self.eta)) / self.sigma2
        return prec, shift

    def beta2_conditional(self):
        oX2 = self.X2 * self.omega[:, None]
        prec = oX2.T @ self.X2 + np.eye(self.p2) / self.priors.sigma_beta**2
        shift = self.X2t_kappa - oX2.T @ (self.phi @ (self.eta + self.zeta))
        return prec, shift

    def eta_conditional(self):
        q_gauss = self.PhiTWPhi / self.sigma2
        oPhi = self.phi * self.omega[:, None]
        q_binom = oPhi.T @ self.phi
        prec = self.tau1**2 * q_gauss + q_binom + np.eye(self.q) / self.sigma_eta2
        shift = (self.tau1 / self.sigma2) * (self.wPhi.T @ (self.z1 - self.X1 @ self.beta1))
        shift = shift + self.Phit_kappa - oPhi.T @ (self.X2 @ self.beta2 + self.phi @ self.zeta)
        return prec, shift

    def zeta_conditional(self):
        oPhi = self.phi * self.omega[:, None]
        prec = oPhi.T @ self.phi + np.eye(self.q) / self.sigma_zeta2
        shift = self.Phit_kappa - oPhi.T @ (self.X2 @ self.beta2 + self.phi @ self.eta)
        return prec, shift

    def tau1_conditional(self):
        v = self.phi @ self.eta
        prec = (self.w * v * v).sum() / self.sigma2 + 1.0 / self.priors.sigma_tau2
        shift = (self.w * v * (self.z1 - self.X1 @ self.beta1)).sum() / self.sigma2
        return prec, shift

    def sigma2_conditional(self):
        resid = self.z1 - self.mean_gaussian()
        return (self.priors.a_eps + 0.5 * self.w_sum,
                self.priors.b_eps + 0.5 * (self.w * resid**2).sum())

    def sigma_eta2_conditional(self):
        return (self.priors.a_eta + 0.5 * self.q,
                self.priors.b_eta + 0.5 * (self.eta @ self.eta))

    def sigma_zeta2_conditional(self):
        return (self.priors.a_zeta + 0.5 * self.q,
                self.priors.b_zeta + 0.5 * (self.zeta @ self.zeta))

    def _update_beta1(self):
        self.beta1 = sample_gaussian_precision(*self.beta1_conditional(), self.rng)

    def _update_beta2(self):
        self.beta2 = sample_gaussian_precision(*self.beta2_conditional(), self.rng)

    def _update_eta(self):
        self.eta = sample_gaussian_precision(*self.eta_conditional(), self.rng)

    def _update_zeta(self):
        self.zeta = sample_gaussian_precision(*self.zeta_conditional(), self.rng)

    def _update_tau1(self):
        prec, shift = self.tau1_conditional()
        self.tau1 = shift / prec + self.rng.standard_normal() / np.sqrt(prec)

    def _update_sigma2(self):
        self.sigma2 = _inv_gamma(*self.sigma2_conditional(), self.rng)

    def _update_sigma_eta2(self):
        self.sigma_eta2 = _inv_gamma(*self.sigma_eta2_conditional(), self.rng)

    def _update_sigma_zeta2(self):
        self.sigma_zeta2 = _inv_gamma(*self.sigma_zeta2_conditional(), self.rng)

    def _update_omega(self):
        self.omega = draw_pg(self.b_pg, self.linear_predictor_binomial(), self.rng)

    def pseudo_log_likelihood(self) -> float:
        gauss = gaussian_pseudo_loglik(self.z1, self.mean_gaussian(), self.sigma2, self.w)
        binom = binomial_pseudo_loglik(self.z2, self.trials,
                                       self.linear_predictor_binomial(), self.w)
        return gauss + binom


def fit_gaussian_univariate(y, X, phi, weights, priors=None, n_iter: int = 2000,
                            n_burn: int = 1000, seed: int = 0) -> ModelChain:
    """Run the Gaussian univariate sampler and return its chain."""
    sampler = GaussianUnivariateSampler(y, X, phi, weights, priors,
                                        rng=np.random.default_rng(seed))
    return sampler.run(n_iter, n_burn, seed=seed)


def fit_binomial_univariate(y, trials, X, phi, weights, priors=None,
                            n_iter: int = 2000, n_burn: int = 1000,
                            seed: int = 0) -> ModelChain:
    """Run the PG-augmented binomial sampler and return its chain."""
    sampler = BinomialUnivariateSampler(y, trials, X, phi, weights, priors,
                                        rng=np.random.default_rng(seed))
    return sampler.run(n_iter, n_burn, seed=seed)


def fit_multitype(z1, z2, trials, X1, X2, phi, weights, priors=None,
                  n_iter: int = 2000, n_burn: int = 1000, seed: int = 0) -> ModelChain:
    """Run the joint Gaussian + binomial sampler and return its chain."""
    sampler = MultitypeSampler(z1, z2, trials, X1, X2, phi, weights, priors,
                               rng=np.random.default_rng(seed))
    return sampler.run(n_iter, n_burn, seed=seed)
