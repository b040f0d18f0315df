"""Seeded Monte Carlo experiments over attack/protocol configurations.

Trial ``i`` of sweep point ``k`` draws from ``random.Random(f"{seed}:{k}:{i}")``
(string seeds are hashed with SHA-512 by the stdlib), so results never depend
on how trials are split across worker processes.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import random
import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from .adversary import (
    AliceStrategy,
    BiasPolicy,
    BobStrategy,
    CheatStats,
    MeasurementPolicy,
    NON_PHYSICAL,
    TrialOutcome,
    attack_basis_flip,
    attack_bob_biased,
    attack_bob_distinguish,
    attack_decoy_substitution,
    attack_deferred_measurement,
    attack_weak_zeta_on_p,
    attack_weak_zeta_prime,
    honest_trial,
)
from .protocol import ConfigurationError, DecoyPolicy, ProtocolParams, VerificationResult

CSV_HEADER = [
    "protocol", "alice", "bob", "m", "n", "p", "q", "trials", "seed",
    "accept", "stderr", "beta0", "beta1", "lambda",
    "reject_mixing", "reject_unmarked", "reject_outcome", "reject_crosscheck", "ms",
]
SWEEPABLE = ("m", "n", "p", "q", "threshold")
PROTOCOLS = ("p", "pprime")

_P_ONLY_ALICE = {AliceStrategy.DECOY_SUBSTITUTION, AliceStrategy.DEFERRED_MEASUREMENT, AliceStrategy.WEAK_ZETA_P}
_BETA_ALICE = {AliceStrategy.DEFERRED_MEASUREMENT, AliceStrategy.WEAK_ZETA_PRIME, AliceStrategy.WEAK_ZETA_P}
_DISTINGUISHERS = {
    BobStrategy.INFORMED_MARKED,
    BobStrategy.INFORMED_NONDECOY,
    BobStrategy.ENTANGLED_PROBE,
    BobStrategy.UNINFORMED_GUESS,
}


class EmitError(OSError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    params: ProtocolParams
    protocol: str = "p"
    alice: AliceStrategy = AliceStrategy.HONEST
    bob: BobStrategy = BobStrategy.HONEST
    trials: int = 10_000
    seed: int = 0
    threshold: float = 4.0
    decoy_policy: DecoyPolicy = DecoyPolicy.BB84
    sweep: tuple[tuple[str, tuple], ...] = ()
    zeta_policy: MeasurementPolicy = MeasurementPolicy.PLUS
    bias_policy: BiasPolicy = BiasPolicy.ALL_ZERO_PLUS
    ancilla: bool = False
    jobs: int = 1
    timing: bool = False

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigurationError(f"unknown protocol {self.protocol!r}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigurationError(f"trials must be a positive integer, got {self.trials!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be at least 1")
        if self.threshold <= 0:
            raise ConfigurationError("threshold must be positive")
        if self.alice is not AliceStrategy.HONEST and self.bob is not BobStrategy.HONEST:
            raise ConfigurationError("only one party may cheat in a run")
        if self.protocol == "pprime":
            if self.alice in _P_ONLY_ALICE or self.bob in _DISTINGUISHERS:
                raise ConfigurationError(f"strategy not defined for P': alice={self.alice.value}, bob={self.bob.value}")
        if self.alice is AliceStrategy.WEAK_ZETA_PRIME and self.protocol != "pprime":
            raise ConfigurationError("zeta-prime runs against protocol pprime")
        for name, values in self.sweep:
            if name not in SWEEPABLE:
                raise ConfigurationError(f"cannot sweep {name!r}; choose from {', '.join(SWEEPABLE)}")
            if not values:
                raise ConfigurationError(f"sweep over {name} has no values")
        for point in self.points():
            point.params.check_ordering()
            if point.alice is AliceStrategy.DECOY_SUBSTITUTION and point.params.q < point.params.n + point.params.m:
                raise ConfigurationError("decoy-sub needs q >= n + m")

    def points(self) -> list["ExperimentConfig"]:
        """One config per sweep point (cartesian product, in declaration order)."""
        if not self.sweep:
            return [self]
        names = [name for name, _ in self.sweep]
        out = []
        for combo in itertools.product(*(values for _, values in self.sweep)):
            fields = dict(zip(names, combo))
            threshold = float(fields.pop("threshold", self.threshold))
            pdict = {"m": self.params.m, "n": self.params.n, "p": self.params.p, "q": self.params.q}
            pdict.update({k: int(v) for k, v in fields.items()})
            out.append(replace(self, params=ProtocolParams(**pdict), threshold=threshold, sweep=()))
        return out


@dataclass
class Tally:
    stats: CheatStats = field(default_factory=CheatStats)
    counts: Counter = field(default_factory=Counter)
    passed_outcome: int = 0

    def add(self, o: TrialOutcome) -> None:
        self.stats.add(o)
        self.counts[o.result.value if o.result else "none"] += 1
        self.passed_outcome += o.passed_outcome

    def merge(self, other: "Tally") -> "Tally":
        return Tally(self.stats.merge(other.stats), self.counts + other.counts, self.passed_outcome + other.passed_outcome)


@dataclass
class ResultRow:
    protocol: str
    alice: str
    bob: str
    m: int
    n: int
    p: int
    q: int
    trials: int
    seed: int
    accept: float
    stderr: float
    beta0: Optional[float]
    beta1: Optional[float]
    lam: Optional[float]
    reject_mixing: int
    reject_unmarked: int
    reject_outcome: int
    reject_crosscheck: int
    ms: Optional[float] = None
    accepted: int = 0
    unverified: int = 0
    pass_outcome: float = 0.0
    lambda_stderr: Optional[float] = None
    threshold: float = 4.0
    non_physical: bool = False

    def csv_values(self) -> list[str]:
        values = [
            self.protocol, self.alice, self.bob, self.m, self.n, self.p, self.q, self.trials, self.seed,
            self.accept, self.stderr, self.beta0, self.beta1, self.lam,
            self.reject_mixing, self.reject_unmarked, self.reject_outcome, self.reject_crosscheck, self.ms,
        ]
        return [_fmt(v) for v in values]

    def record(self) -> dict:
        """All fields, numbers rounded to the same 6 significant digits as the CSV."""
        return {
            "protocol": self.protocol, "alice": self.alice, "bob": self.bob,
            "m": self.m, "n": self.n, "p": self.p, "q": self.q, "trials": self.trials, "seed": self.seed,
            "accept": _round(self.accept), "stderr": _round(self.stderr),
            "beta0": _round(self.beta0), "beta1": _round(self.beta1), "lambda": _round(self.lam),
            "reject_mixing": self.reject_mixing, "reject_unmarked": self.reject_unmarked,
            "reject_outcome": self.reject_outcome, "reject_crosscheck": self.reject_crosscheck,
            "ms": _round(self.ms), "accepted": self.accepted, "unverified": self.unverified,
            "pass_outcome": _round(self.pass_outcome), "lambda_stderr": _round(self.lambda_stderr),
            "threshold": _round(self.threshold), "non_physical": self.non_physical,
        }


def _round(v: Optional[float]) -> Optional[float]:
    return None if v is None else float(f"{v:.6g}")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    return str(v)


# ------------------------------------------------------------------ trials


def trial_rng(seed: int, point: int, index: int) -> random.Random:
    return random.Random(f"{seed}:{point}:{index}")


def trial_function(cfg: ExperimentConfig) -> Callable[[random.Random], TrialOutcome]:
    params = cfg.params
    kw = {"threshold": cfg.threshold}
    if cfg.bob is BobStrategy.BIASED_STATE:
        return lambda rng: attack_bob_biased(params, rng, cfg.bias_policy, **kw)
    if cfg.bob in _DISTINGUISHERS:
        return lambda rng: attack_bob_distinguish(params, cfg.bob, rng, cfg.decoy_policy, **kw)
    a = cfg.alice
    if a is AliceStrategy.HONEST:
        return lambda rng: honest_trial(params, rng, cfg.protocol, cfg.decoy_policy, **kw)
    if a is AliceStrategy.BASIS_FLIP:
        return lambda rng: attack_basis_flip(params, rng, cfg.protocol, cfg.decoy_policy, **kw)
    if a is AliceStrategy.DECOY_SUBSTITUTION:
        return lambda rng: attack_decoy_substitution(params, rng, cfg.decoy_policy, **kw)
    if a is AliceStrategy.DEFERRED_MEASUREMENT:
        return lambda rng: attack_deferred_measurement(params, rng, cfg.ancilla, cfg.decoy_policy, **kw)
    if a is AliceStrategy.WEAK_ZETA_PRIME:
        return lambda rng: attack_weak_zeta_prime(params, rng, **kw)
    if a is AliceStrategy.WEAK_ZETA_P:
        return lambda rng: attack_weak_zeta_on_p(params, rng, cfg.zeta_policy, cfg.decoy_policy, **kw)
    raise ConfigurationError(f"no trial for alice={a}")


def run_trials(cfg: ExperimentConfig, point: int, start: int, stop: int) -> Tally:
    fn = trial_function(cfg)
    tally = Tally()
    for i in range(start, stop):
        tally.add(fn(trial_rng(cfg.seed, point, i)))
    return tally


def _chunks(trials: int, parts: int) -> list[tuple[int, int]]:
    size = -(-trials // parts)
    return [(s, min(s + size, trials)) for s in range(0, trials, size)]


def _row(cfg: ExperimentConfig, tally: Tally, ms: Optional[float]) -> ResultRow:
    s = tally.stats
    beta0 = beta1 = lam = lam_err = None
    if cfg.alice in _BETA_ALICE:
        beta0, beta1, lam, lam_err = s.beta0, s.beta1, s.lam, s.lam_stderr
    c = tally.counts
    return ResultRow(
        protocol=cfg.protocol,
        alice=cfg.alice.value,
        bob=cfg.bob.value,
        m=cfg.params.m,
        n=cfg.params.n,
        p=cfg.params.p,
        q=cfg.params.q,
        trials=s.trials,
        seed=cfg.seed,
        accept=s.estimate,
        stderr=s.stderr,
        beta0=beta0,
        beta1=beta1,
        lam=lam,
        reject_mixing=c[VerificationResult.ABORT_MIXING.value],
        reject_unmarked=c[VerificationResult.REJECT_UNMARKED.value],
        reject_outcome=c[VerificationResult.REJECT_OUTCOME.value],
        reject_crosscheck=c[VerificationResult.REJECT_CROSSCHECK.value],
        ms=ms,
        accepted=c[VerificationResult.ACCEPT.value],
        unverified=c["none"],
        pass_outcome=tally.passed_outcome / s.trials,
        lambda_stderr=lam_err,
        threshold=cfg.threshold,
        non_physical=cfg.bob in NON_PHYSICAL,
    )


def run_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """Run every sweep point; rows come back in sweep order.

    With ``jobs > 1`` trials are split into contiguous index ranges across a
    process pool and the integer tallies are summed, which gives exactly the
    single-process result.
    """
    config.validate()
    rows = []
    for k, cfg in enumerate(config.points()):
        t0 = time.perf_counter()
        if config.jobs == 1:
            tally = run_trials(cfg, k, 0, cfg.trials)
        else:
            chunks = _chunks(cfg.trials, config.jobs)
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                parts = pool.map(run_trials, [cfg] * len(chunks), [k] * len(chunks), *zip(*chunks))
                tally = Tally()
                for part in parts:
                    tally = tally.merge(part)
        ms = (time.perf_counter() - t0) * 1e3 if config.timing else None
        rows.append(_row(cfg, tally, ms))
    return rows


# ------------------------------------------------------------------ classification


@dataclass
class SecurityReport:
    protocol: str
    attack: str
    label: str
    ms: list[int]
    lambdas: list[float]
    stderrs: list[float]
    alpha: Optional[float]

    def describe(self) -> str:
        pts = ", ".join(f"m={m}: {l:.4g}+-{e:.2g}" for m, l, e in zip(self.ms, self.lambdas, self.stderrs))
        rate = "" if self.alpha is None else f", fitted decay 2^({-self.alpha:.3g} m)"
        return f"{self.attack} on {self.protocol}: {self.label} ({pts}{rate})"


def _row_lambda(row: ResultRow) -> tuple[float, float]:
    if row.lam is not None:
        return row.lam, row.lambda_stderr or 0.0
    return row.accept, row.stderr


def classify_security(rows: Sequence[ResultRow], sigmas: float = 4.0) -> SecurityReport:
    """Label an attack's m-sweep as ``strong`` (lambda decays) or ``weak`` (plateau).

    A sweep is weak when lambda at the largest m is more than ``sigmas``
    standard errors above zero and is not significantly below lambda at the
    smallest m. The decay exponent is a weighted least-squares fit of
    ``log2 lambda`` against ``m`` over the strictly positive points.
    """
    if not rows:
        raise ValueError("no rows to classify")
    keys = {(r.protocol, r.alice, r.bob) for r in rows}
    if len(keys) != 1:
        raise ValueError(f"rows mix several attacks: {sorted(keys)}")
    ordered = sorted(rows, key=lambda r: r.m)
    ms = [r.m for r in ordered]
    if len(set(ms)) < 3:
        raise ValueError("classification needs at least three values of m")
    lams, errs = zip(*(_row_lambda(r) for r in ordered))
    lo, hi = 0, len(ordered) - 1
    plateau_above_zero = lams[hi] > sigmas * errs[hi] and lams[hi] > 0
    drop = lams[lo] - lams[hi]
    significant_drop = drop > sigmas * math.hypot(errs[lo], errs[hi])
    label = "weak" if plateau_above_zero and not significant_drop else "strong"
    first = ordered[0]
    attack = first.alice if first.bob == "honest" else first.bob
    return SecurityReport(first.protocol, attack, label, ms, list(lams), list(errs), _fit_decay(ms, lams, errs))


def _fit_decay(ms, lams, errs) -> Optional[float]:
    pts = [(m, l, e) for m, l, e in zip(ms, lams, errs) if l > 0]
    if len(pts) < 2:
        return None
    # weight by 1 / var(log2 lambda) ~ (lambda / stderr)^2
    ws = [(l / e) ** 2 if e > 0 else 1e12 for _, l, e in pts]
    xs = [m for m, _, _ in pts]
    ys = [math.log2(l) for _, l, _ in pts]
    wsum = sum(ws)
    xbar = sum(w * x for w, x in zip(ws, xs)) / wsum
    ybar = sum(w * y for w, y in zip(ws, ys)) / wsum
    sxx = sum(w * (x - xbar) ** 2 for w, x in zip(ws, xs))
    if sxx == 0:
        return None
    slope = sum(w * (x - xbar) * (y - ybar) for w, x, y in zip(ws, xs, ys)) / sxx
    return -slope


def contrast(report_p: SecurityReport, report_pprime: SecurityReport) -> str:
    return "\n".join([report_p.describe(), report_pprime.describe()])


# ------------------------------------------------------------------ output


def format_rows(rows: Sequence[ResultRow], fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.csv_values())
        return buf.getvalue()
    if fmt == "text":
        return "".join(json.dumps(r.record(), separators=(",", ":")) + "\n" for r in rows)
    raise ValueError(f"unknown format {fmt!r}")


def emit(rows: Sequence[ResultRow], fmt: str = "csv", destination=None) -> None:
    """Write rows to a path, an open text stream, or stdout when ``destination`` is None/'-'."""
    text = format_rows(rows, fmt)
    if destination is None or destination == "-":
        sys.stdout.write(text)
        return
    if hasattr(destination, "write"):
        destination.write(text)
        return
    try:
        with open(destination, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise EmitError(f"cannot write {os.fspath(destination)}: {exc.strerror or exc}") from exc


def parse_csv(text: str) -> list[dict]:
    """Read back :func:`emit` CSV output; numeric fields become int/float, blanks None."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in rec.items():
            if v == "":
                row[k] = None
            elif k in ("protocol", "alice", "bob"):
                row[k] = v
            elif k in ("m", "n", "p", "q", "trials", "seed") or k.startswith("reject_"):
                row[k] = int(v)
            else:
                row[k] = float(v)
        out.append(row)
    return out
