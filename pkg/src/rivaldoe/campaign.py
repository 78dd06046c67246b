"""Sequential design-of-experiments campaigns, replication harness and statistics.

One replication draws random initial data from the case study's
data-generating model, then alternates parameter re-estimation, a
discrimination update, and the choice of the next design by maximising a
design criterion over a candidate grid.

Record files (JSON, one per replication) hold::

    format          "rivaldoe-record/1"
    config          every CampaignConfig field
    config_hash     sha256 of the config without ``replications``
    replication     index i; the seed is SeedSequence(seed, spawn_key=(i,))
    models          model names, in index order
    true_model      1-based index of the data-generating model
    outcome         success | failure | inconclusive | error
    termination     winner | all_rejected | inconclusive | error
    winner          1-based index or null
    n_additional    experiments added after the initial design
    n_initial, designs, observations
    rounds          per-round snapshots (see ``_snapshot``)
    error           message when outcome is error, else null
"""

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy.optimize import minimize

from . import criteria
from .case_studies import get_case_study, simulate_observation
from .discrimination import (
    METHODS,
    akaike_discrimination_weights,
    check_termination,
    chi2_refit_and_test,
    initial_state,
    method_weights,
    update_posteriors,
)
from .exceptions import (
    CapabilityError,
    ContractError,
    DataGenerationError,
    ModelEvaluationError,
    NumericalError,
    RenormalisationError,
    SingularInformationError,
    SingularKernelError,
)
from .param_estim import ExperimentalDataset, estimate_parameters, laplace_covariance
from .surrogate import (
    GaussianPrediction,
    build_surrogate,
    generate_training_data,
    marginal_analytic,
    marginal_taylor1,
    marginal_taylor2,
)

logger = logging.getLogger(__name__)

DESIGN_CRITERIA = criteria.CRITERIA + ("UNIFORM",)
MARGINALS = ("analytic", "gp_taylor1", "gp_taylor2")
RECORD_FORMAT = "rivaldoe-record/1"
OUTCOMES = ("success", "failure", "inconclusive", "error")

# errors that end one replication but never the batch
_ISOLATED = (ContractError, CapabilityError, DataGenerationError, ModelEvaluationError,
             NumericalError, RenormalisationError, SingularInformationError,
             SingularKernelError, np.linalg.LinAlgError, FloatingPointError, ValueError)


@dataclass(frozen=True)
class CampaignConfig:
    """Everything that determines a campaign besides the replication index.

    ``true_model`` is 1-based; ``budget`` and ``n_initial`` default to the
    case study's values. Thresholds: a posterior or Akaike weight at or
    above ``posterior_threshold`` / ``akaike_threshold`` names a winner, and
    a chi-square survival probability at or below ``chi2_threshold``
    rejects a model.
    """

    case: str = "mixing"
    true_model: int = None
    true_theta: tuple = None
    design_criterion: str = "JR"
    discrimination_method: str = "posteriors"
    marginal_method: str = "analytic"
    budget: int = None
    n_initial: int = None
    replications: int = 1
    seed: int = 0
    candidate_grid: int = 21
    refine: bool = False
    estimation_method: str = "least_squares"
    estimation_starts: int = 3
    refit_starts: int = 1
    surrogate_grid: int = 7
    surrogate_spread: float = 0.2
    surrogate_max_points: int = 1000
    surrogate_inducing: int = None
    surrogate_restarts: int = 1
    posterior_threshold: float = 0.999
    akaike_threshold: float = 0.999
    chi2_threshold: float = 0.01
    store_curves: bool = False

    def __post_init__(self):
        object.__setattr__(self, "design_criterion", str(self.design_criterion).upper())
        if self.true_theta is not None:
            object.__setattr__(self, "true_theta", tuple(float(t) for t in self.true_theta))
        if self.design_criterion not in DESIGN_CRITERIA:
            raise ContractError(f"design_criterion must be one of {DESIGN_CRITERIA}")
        if self.discrimination_method not in METHODS:
            raise ContractError(f"discrimination_method must be one of {METHODS}")
        if self.marginal_method not in MARGINALS:
            raise ContractError(f"marginal_method must be one of {MARGINALS}")
        if self.budget is not None and self.budget < 0:
            raise ContractError("budget must be non-negative")
        if self.n_initial is not None and self.n_initial < 1:
            raise ContractError("n_initial must be positive")
        if self.replications < 1:
            raise ContractError("replications must be at least 1")
        if self.candidate_grid < 2 or self.surrogate_grid < 2:
            raise ContractError("grids need at least 2 points per dimension")
        if not 0 < self.chi2_threshold < 1:
            raise ContractError("chi2_threshold must lie in (0, 1)")
        for name in ("posterior_threshold", "akaike_threshold"):
            if not 0 < getattr(self, name) <= 1:
                raise ContractError(f"{name} must lie in (0, 1]")
        if self.estimation_method not in ("least_squares", "diff_evolution"):
            raise ContractError("estimation_method must be least_squares or diff_evolution")

    def to_dict(self):
        d = asdict(self)
        if d["true_theta"] is not None:
            d["true_theta"] = list(d["true_theta"])
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ContractError(f"{path}: {exc}") from None
        if not isinstance(d, dict):
            raise ContractError(f"{path}: expected a JSON object")
        return cls.from_dict(d)

    def config_hash(self):
        d = self.to_dict()
        d.pop("replications")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def case_study(self):
        cs = get_case_study(self.case, self.true_model, self.true_theta)
        over = {k: v for k, v in (("budget", self.budget), ("n_initial", self.n_initial))
                if v is not None}
        return replace(cs, **over) if over else cs


@dataclass
class CampaignRecord:
    """Outcome and trajectory of one replication (see the module docstring)."""

    config: CampaignConfig
    replication: int
    models: list
    true_model: int
    outcome: str
    termination: str
    winner: int = None
    n_additional: int = 0
    n_initial: int = 0
    designs: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    rounds: list = field(default_factory=list)
    error: str = None

    def to_dict(self):
        return {"format": RECORD_FORMAT, "config": self.config.to_dict(),
                "config_hash": self.config.config_hash(), "replication": self.replication,
                "models": list(self.models), "true_model": self.true_model,
                "outcome": self.outcome, "termination": self.termination, "winner": self.winner,
                "n_additional": self.n_additional, "n_initial": self.n_initial,
                "designs": self.designs, "observations": self.observations,
                "rounds": self.rounds, "error": self.error}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != RECORD_FORMAT:
            raise ContractError(f"not a campaign record (format {d.get('format')!r})")
        return cls(config=CampaignConfig.from_dict(d["config"]), replication=d["replication"],
                   models=d["models"], true_model=d["true_model"], outcome=d["outcome"],
                   termination=d["termination"], winner=d["winner"],
                   n_additional=d["n_additional"], n_initial=d["n_initial"],
                   designs=d["designs"], observations=d["observations"], rounds=d["rounds"],
                   error=d["error"])


def replication_seed(seed, index):
    return np.random.SeedSequence(int(seed), spawn_key=(int(index),))


# --------------------------------------------------------------------------
# one replication


def _prior_covariance(model):
    # variance of a uniform distribution over the parameter box
    w = model.param_bounds[:, 1] - model.param_bounds[:, 0]
    return np.diag(w ** 2 / 12.0)


class _Predictor:
    """Marginal predictions of one model under the configured method."""

    def __init__(self, model, config, rng):
        self.model, self.config, self.rng = model, config, rng
        self.ensemble = None
        self.n_builds = 0

    def refresh(self, theta):
        """(Re)build the surrogate when ``theta`` leaves its central region."""
        cfg = self.config
        if cfg.marginal_method == "analytic":
            return False
        if self.ensemble is not None and self.ensemble.covers(theta):
            return False
        data = generate_training_data(self.model, cfg.surrogate_grid, theta, cfg.surrogate_spread,
                                      max_points=cfg.surrogate_max_points, random_state=self.rng)
        warm = self.ensemble.kernels() if self.ensemble is not None else None
        self.ensemble = build_surrogate(self.model, data, warm, n_restarts=cfg.surrogate_restarts,
                                        n_inducing=cfg.surrogate_inducing, random_state=self.rng)
        self.n_builds += 1
        return True

    def parameter_covariance(self, data, theta):
        if self.config.marginal_method == "analytic":
            predictor = self.model
        else:
            predictor = self.ensemble.param_gradients
        try:
            return laplace_covariance(predictor, data, theta), False
        except SingularInformationError:
            logger.debug("%s: singular information, using the prior box variance", self.model.name)
            return _prior_covariance(self.model), True

    def marginal(self, U, theta, Sigma):
        method = self.config.marginal_method
        if method == "analytic":
            return marginal_analytic(self.model, U, theta, Sigma)
        fn = marginal_taylor1 if method == "gp_taylor1" else marginal_taylor2
        return fn(self.ensemble, U, theta, Sigma)


def _predictive_arrays(predictors, alive, U, thetas, sigmas, noise):
    n, M, E = len(U), len(predictors), noise.shape[0]
    means = np.zeros((n, M, E))
    covs = np.broadcast_to(noise, (n, M, E, E)).copy()
    for i, p in enumerate(predictors):
        if alive[i]:
            g = p.marginal(U, thetas[i], sigmas[i])
            means[:, i] = g.mean
            covs[:, i] += g.covariance
    return means, covs


def _score(config, means, covs, state, noise):
    w = method_weights(state, config.discrimination_method)
    ps = criteria.PredictiveSet(means, covs, weights=w, param_counts=state.param_counts,
                                hr_scaling=np.diag(1.0 / np.diag(noise)), active=state.alive)
    return criteria.evaluate(config.design_criterion, ps, noise=noise, priors=w)


def _refine(config, cs, u0, best, score_at):
    """Local continuous refinement of the grid optimum, binary variables fixed."""
    cont = [d for d in range(len(u0)) if d not in cs.binary_dims]
    b = cs.design_bounds[cont]

    def neg(x):
        u = u0.copy()
        u[cont] = x
        return -score_at(u)

    res = minimize(neg, u0[cont], method="L-BFGS-B", bounds=list(map(tuple, b)))
    if np.isfinite(res.fun) and -res.fun > best:
        u = u0.copy()
        u[cont] = res.x
        return u, -res.fun
    return u0, best


def _snapshot(r, state, thetas, sse, decision):
    return {"round": r, "theta": [t.tolist() for t in thetas], "residual_sse": sse.tolist(),
            "state": state.to_dict(), "decision": decision.kind,
            "winner": None if decision.winner is None else decision.winner + 1}


def run_replication(config, index=0, case_study=None):
    """Run replication ``index`` of a campaign; deterministic in (config, index).

    ``case_study`` overrides the named case (e.g. a custom set of rival
    models); it is not part of the record.
    """
    cs = config.case_study() if case_study is None else case_study
    streams = [np.random.default_rng(s) for s in replication_seed(config.seed, index).spawn(5)]
    rng_init, rng_noise, rng_est, rng_sur, rng_uniform = streams
    models, noise = cs.models, cs.noise_covariance
    M, E = len(models), cs.n_outputs
    D = np.array([m.param_dim for m in models])
    method, budget = config.discrimination_method, cs.budget
    threshold = (config.akaike_threshold if method == "akaike" else config.posterior_threshold)

    rec = CampaignRecord(config=config, replication=int(index), models=[m.name for m in models],
                         true_model=cs.true_model + 1, outcome="inconclusive",
                         termination="inconclusive", n_initial=cs.n_initial)
    U0 = cs.initial_designs(rng_init)
    data = ExperimentalDataset(U0, simulate_observation(cs, U0, rng_noise), noise)
    predictors = [_Predictor(m, config, rng_sur) for m in models]
    candidates = None if config.design_criterion == "UNIFORM" else cs.design_grid(config.candidate_grid)
    state = initial_state(D, E, n_observations=len(data))
    thetas = [None] * M
    sse = np.zeros(M)
    pending = None
    try:
        for r in range(budget + 1):
            if pending is not None and method == "posteriors":
                state = update_posteriors(state, pending, data.observations[-1])
            for i, m in enumerate(models):
                if not state.alive[i]:
                    continue
                est = estimate_parameters(
                    m, data, config.estimation_method, init=thetas[i], random_state=rng_est,
                    n_starts=config.estimation_starts if thetas[i] is None else config.refit_starts)
                thetas[i], sse[i] = est.theta_star, est.residual_sse
            N = len(data)
            if method == "chi2":
                state = chi2_refit_and_test(state, sse, N, config.chi2_threshold)
            else:
                state = replace(state, chi2_stats=sse.copy(), dof=N * E - D, n_observations=N)
            state = replace(state, akaike_weights=akaike_discrimination_weights(state, sse))
            decision = check_termination(state, method, budget - r, threshold)
            snap = _snapshot(r, state, thetas, sse, decision)
            rec.rounds.append(snap)
            if decision.terminal:
                break

            sigmas, fallback, rebuilt = [None] * M, [False] * M, [False] * M
            for i, p in enumerate(predictors):
                if state.alive[i]:
                    rebuilt[i] = p.refresh(thetas[i])
                    sigmas[i], fallback[i] = p.parameter_covariance(data, thetas[i])
            U = cs.sample_designs(1, rng_uniform) if candidates is None else candidates
            means, covs = _predictive_arrays(predictors, state.alive, U, thetas, sigmas, noise)
            if candidates is None:
                k, best, n_ties, scores = 0, None, 1, None
                u = U[0]
            else:
                scores = np.atleast_1d(_score(config, means, covs, state, noise))
                k = int(np.argmax(scores))          # lowest index wins ties
                best = float(scores[k])
                n_ties = int(np.sum(scores == best))
                if n_ties > 1:
                    logger.info("round %d: %d tied candidates, taking index %d", r, n_ties, k)
                u = U[k]
                if config.refine:
                    def score_at(v):
                        mu, S = _predictive_arrays(predictors, state.alive, v[None], thetas,
                                                   sigmas, noise)
                        return float(np.atleast_1d(_score(config, mu, S, state, noise))[0])
                    u, best = _refine(config, cs, u.copy(), best, score_at)
                    means, covs = _predictive_arrays(predictors, state.alive, u[None], thetas,
                                                     sigmas, noise)
                    k = 0
            pending = [GaussianPrediction(means[k, i], covs[k, i]) for i in range(M)]
            y = simulate_observation(cs, u, rng_noise)
            data = data.append(u, y)
            snap.update({"chosen": u.tolist(), "candidate_index": None if candidates is None else k,
                         "criterion": best, "n_ties": n_ties, "surrogate_rebuilt": rebuilt,
                         "prior_covariance_fallback": fallback})
            if config.store_curves and scores is not None:
                snap["curve"] = scores.tolist()
        kind, winner = decision.kind, decision.winner
    except _ISOLATED as exc:
        logger.warning("replication %d aborted: %s", index, exc)
        kind, winner = "error", None
        rec.error = f"{type(exc).__name__}: {exc}"

    rec.termination = kind
    rec.n_additional = len(data) - cs.n_initial
    if kind == "winner":
        rec.winner = winner + 1
        rec.outcome = "success" if winner == cs.true_model else "failure"
    elif kind == "error":
        rec.outcome = "error"
    else:
        rec.outcome = "inconclusive"
    rec.designs = data.designs.tolist()
    rec.observations = data.observations.tolist()
    return rec


# --------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class CampaignStats:
    """Aggregates over replications.

    ``A`` and ``SE`` (sample standard deviation over root count) cover
    successful replications only and are None when there are none. ``S``,
    ``F`` and ``I`` are percentages of the replications that did not error;
    ``errors`` counts the ones that did.
    """

    n: int
    A: float
    SE: float
    S: float
    F: float
    I: float
    errors: int


def aggregate(records):
    if not records:
        raise ContractError("need at least one record")
    outcomes = [r.outcome for r in records]
    a = np.array([r.n_additional for r in records if r.outcome == "success"], dtype=float)
    valid = len(records) - outcomes.count("error")
    pct = (lambda k: 100.0 * outcomes.count(k) / valid) if valid else (lambda k: None)
    A = float(a.mean()) if a.size else None
    SE = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else None
    return CampaignStats(len(records), A, SE, pct("success"), pct("failure"),
                         pct("inconclusive"), outcomes.count("error"))


def _fmt(x, digits):
    return "NA" if x is None else f"{x:.{digits}f}"


SUMMARY_COLUMNS = ("config_hash", "case", "true_model", "marginal", "md", "dc", "n",
                   "A", "SE", "S", "F", "I", "errors")


def _groups(records):
    by = {}
    for r in records:
        by.setdefault(r.config.config_hash(), []).append(r)
    key = lambda h: (by[h][0].config.case, by[h][0].true_model, by[h][0].config.marginal_method,
                     by[h][0].config.discrimination_method, by[h][0].config.design_criterion, h)
    return [(h, sorted(by[h], key=lambda r: r.replication)) for h in sorted(by, key=key)]


def summary_csv(records):
    """One row of statistics per configuration, in a stable order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for h, recs in _groups(records):
        c, s = recs[0].config, aggregate(recs)
        w.writerow([h[:12], c.case, recs[0].true_model, c.marginal_method,
                    c.discrimination_method, c.design_criterion, s.n, _fmt(s.A, 4),
                    _fmt(s.SE, 4), _fmt(s.S, 2), _fmt(s.F, 2), _fmt(s.I, 2), s.errors])
    return buf.getvalue()


def stats_table(records):
    """Wide table: rows A, SE, S, F, I; one column per (marginal, MD, DC)."""
    cols = []
    for _, recs in _groups(records):
        c = recs[0].config
        cols.append((f"{c.case}/{c.marginal_method}/{c.discrimination_method}/{c.design_criterion}",
                     aggregate(recs)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stat"] + [name for name, _ in cols])
    for stat, digits in (("A", 2), ("SE", 2), ("S", 0), ("F", 0), ("I", 0)):
        w.writerow([stat] + [_fmt(getattr(s, stat), digits) for _, s in cols])
    return buf.getvalue()


def curves_csv(records):
    """Criterion value of every candidate design per round (plot data)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_hash", "replication", "round", "candidate", "design", "criterion"])
    for h, recs in _groups(records):
        for r in recs:
            if not any("curve" in snap for snap in r.rounds):
                continue
            grid = r.config.case_study().design_grid(r.config.candidate_grid)
            for snap in r.rounds:
                for k, v in enumerate(snap.get("curve", ())):
                    w.writerow([h[:12], r.replication, snap["round"], k,
                                " ".join(repr(float(x)) for x in grid[k]), repr(v)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# batch runs and persistence


def record_filename(record):
    return f"{record.config.config_hash()[:12]}_rep{record.replication:04d}.json"


def _run_one(args):
    config, index = args
    return run_replication(config, index)


def run_campaign(config, workers=1, case_study=None, on_record=None):
    """Run every replication; ``on_record`` is called as each one finishes.

    Replications run in a process pool when ``workers > 1`` (named case
    studies only). Results are returned in replication order.
    """
    jobs = [(config, i) for i in range(config.replications)]
    records = []
    if workers > 1 and case_study is None:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_run_one, jobs):
                records.append(rec)
                if on_record:
                    on_record(rec)
    else:
        for cfg, i in jobs:
            rec = run_replication(cfg, i, case_study)
            records.append(rec)
            if on_record:
                on_record(rec)
    return records


def load_records(paths):
    out = []
    for p in paths:
        with open(p) as fh:
            out.append(CampaignRecord.from_dict(json.load(fh)))
    return out
