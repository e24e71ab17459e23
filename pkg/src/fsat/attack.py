"""L-infinity PGD in the time domain and on band-limited STFT magnitudes.

Both attacks keep the highest-loss iterate seen, counting the unperturbed
input, so ``loss_after >= loss_before`` always holds. Restart ``r`` of clip
``k`` draws its random start from ``default_rng([seed, k, r])``; adding
restarts therefore only enlarges the candidate set.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .audio_io import Label, Waveform
from .dsp import FrequencyBand, StftConfig
from .errors import AttackError, ConfigError
from .model import ClassifierParams, backward, forward, nll


class Domain(str, enum.Enum):
    TIME = "time"
    FREQ_MAGNITUDE = "freq_magnitude"


@dataclass(frozen=True)
class AttackConfig:
    domain: Domain = Domain.FREQ_MAGNITUDE
    epsilon: float = 1e-4
    alpha: float = 4e-4
    iterations: int = 5
    restarts: int = 1
    band: FrequencyBand | None = FrequencyBand(4000.0, 8000.0)
    random_init: bool = False
    stft: StftConfig = StftConfig()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain(self.domain))
        if self.epsilon < 0 or self.alpha <= 0:
            raise ConfigError("attack needs epsilon >= 0 and alpha > 0")
        if self.iterations < 1 or self.restarts < 1:
            raise ConfigError("attack needs iterations >= 1 and restarts >= 1")
        if self.domain is Domain.FREQ_MAGNITUDE:
            if self.band is None:
                raise ConfigError("frequency attack requires a band")
            dsp.band_to_bins(self.band, self.stft)

    @property
    def label(self):
        where = "time" if self.domain is Domain.TIME else f"freq[{self.band}]"
        return f"{where} K={self.iterations} R={self.restarts} eps={self.epsilon:g} alpha={self.alpha:g}"


def time_attack_config(**kw):
    """Evaluation defaults for the time domain: eps=1e-4, alpha=4e-5."""
    kw.setdefault("epsilon", 1e-4)
    kw.setdefault("alpha", 4e-5)
    return AttackConfig(domain=Domain.TIME, band=None, **kw)


def freq_attack_config(f_l=4000.0, f_u=8000.0, **kw):
    """Evaluation defaults for band-limited magnitude attacks: eps=1e-4, alpha=4e-4."""
    kw.setdefault("epsilon", 1e-4)
    kw.setdefault("alpha", 4e-4)
    return AttackConfig(domain=Domain.FREQ_MAGNITUDE, band=FrequencyBand(f_l, f_u), **kw)


@dataclass
class AttackResult:
    adversarial: Waveform
    delta_norm_inf: float
    loss_before: float
    loss_after: float
    iterate_of_max_loss: int
    delta: np.ndarray = field(repr=False, default=None)
    iterate_norms: list = field(repr=False, default_factory=list)


@dataclass
class BatchAttackResult:
    adversarial: np.ndarray
    delta: np.ndarray
    delta_norm_inf: np.ndarray
    loss_before: np.ndarray
    loss_after: np.ndarray
    iterate_of_max_loss: np.ndarray
    iterate_norms: np.ndarray  # (n_iterates, batch) norm of delta after every update

    def __getitem__(self, i):
        return AttackResult(Waveform(self.adversarial[i]), float(self.delta_norm_inf[i]),
                            float(self.loss_before[i]), float(self.loss_after[i]),
                            int(self.iterate_of_max_loss[i]), self.delta[i],
                            list(self.iterate_norms[:, i]))


# --------------------------------------------------------------------------
# perturbation parameterizations


class _TimeSpace:
    def __init__(self, x, cfg):
        self.x = x
        self.shape = x.shape
        self.support = None

    def synthesize(self, delta):
        return np.clip(self.x + delta, -1.0, 1.0)

    def pull_back(self, grad_x, delta):
        return grad_x

    def clean(self):
        return self.x


class _FreqSpace:
    """delta lives on STFT magnitudes inside the band; phase and all
    out-of-band bins always come from the original clip."""

    def __init__(self, x, cfg: AttackConfig):
        self.cfg = cfg.stft
        self.length = x.shape[-1]
        self.spec = dsp.stft_array(x, self.cfg)
        self.mag = np.abs(self.spec)
        self.unit = np.exp(1j * np.angle(self.spec))
        self.mask = dsp.band_to_bins(cfg.band, self.cfg)
        self.support = self.mask.selector
        self.shape = self.spec.shape

    def compose(self, delta):
        return dsp.compose_perturbed_array(self.spec, self.unit, self.mag,
                                           dsp.apply_band_mask(delta, self.mask))

    def synthesize(self, delta):
        return dsp.istft_array(self.compose(delta), self.cfg, self.length)

    def pull_back(self, grad_x, delta):
        g = np.real(np.conj(self.unit) * dsp.istft_adjoint_array(grad_x, self.cfg))
        # a clamped bin only responds to increases
        g = np.where((self.mag + delta < 0) & (g < 0), 0.0, g)
        return dsp.apply_band_mask(g, self.mask)

    def clean(self):
        return self.synthesize(np.zeros(self.shape))


def _space(x, cfg):
    return _TimeSpace(x, cfg) if cfg.domain is Domain.TIME else _FreqSpace(x, cfg)


def _loss_and_grad(params, xp, y, need_grad):
    _, _, trace = forward(params, xp)
    per = nll(trace.logits, y)
    if not np.all(np.isfinite(per)):
        raise AttackError("non-finite loss during attack")
    if not need_grad:
        return per, None
    g = backward(params, trace, y, need_params=False).d_input
    if not np.all(np.isfinite(g)):
        raise AttackError("non-finite input gradient during attack")
    return per, g


def _random_start(cfg, restart, keys, shape, support):
    out = np.empty(shape)
    for i, k in enumerate(keys):
        rng = np.random.default_rng([cfg.seed, int(k), restart])
        out[i] = rng.uniform(-cfg.epsilon, cfg.epsilon, size=shape[1:])
    if support is not None:
        out = np.where(support, out, 0.0)
    return out


def freq_delta_gradient(params, x, y, delta, cfg: AttackConfig):
    """Loss and d loss / d delta for a band-limited magnitude perturbation."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    delta = np.asarray(delta, dtype=np.float64).reshape((x.shape[0],) + np.shape(delta)[-2:])
    space = _FreqSpace(x, cfg)
    per, gx = _loss_and_grad(params, space.synthesize(delta), y, True)
    return per, space.pull_back(gx, delta)


def run_attack(params: ClassifierParams, x, y, cfg: AttackConfig, keys=None) -> BatchAttackResult:
    """Attack a batch ``x`` of shape (B, L) with labels ``y``.

    ``keys`` identify clips for the random-start streams (default 0..B-1).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (n,))
    keys = np.arange(n) if keys is None else np.asarray(keys)
    eps, alpha = cfg.epsilon, cfg.alpha

    space = _space(x, cfg)
    x0 = space.clean()
    zero = np.zeros(space.shape)
    reuse_zero = not cfg.random_init
    loss0, grad0 = _loss_and_grad(params, x0, y, need_grad=reuse_zero)

    best_loss = loss0.copy()
    best_x = x0.copy()
    best_delta = zero.copy()
    best_idx = np.zeros(n, dtype=np.int64)
    norms = []
    counter = 0

    def consider(cur_loss, xp, delta):
        nonlocal counter
        counter += 1
        better = cur_loss > best_loss
        best_loss[better] = cur_loss[better]
        best_x[better] = xp[better]
        best_delta[better] = delta[better]
        best_idx[better] = counter

    for r in range(cfg.restarts):
        if r == 0 and reuse_zero:
            delta = zero.copy()
            cur_loss, grad = loss0, grad0
        else:
            delta = _random_start(cfg, r, keys, space.shape, space.support)
            xp = space.synthesize(delta)
            cur_loss, grad = _loss_and_grad(params, xp, y, need_grad=True)
            consider(cur_loss, xp, delta)
        for k in range(cfg.iterations):
            step = np.sign(space.pull_back(grad, delta))
            delta = np.clip(delta + alpha * step, -eps, eps)
            norm = np.abs(delta).reshape(n, -1).max(axis=1)
            if np.any(norm > eps + 1e-12):
                raise AttackError(f"projection failed: |delta| = {norm.max()} > eps = {eps}")
            norms.append(norm)
            xp = space.synthesize(delta)
            cur_loss, grad = _loss_and_grad(params, xp, y, need_grad=k < cfg.iterations - 1)
            consider(cur_loss, xp, delta)

    if cfg.domain is Domain.TIME:
        dnorm = np.abs(best_x - x).max(axis=1)
    else:
        dnorm = np.abs(best_delta).reshape(n, -1).max(axis=1)
    return BatchAttackResult(best_x, best_delta, dnorm, loss0, best_loss, best_idx,
                             np.array(norms).reshape(len(norms), n))


def _single(params, w, y, cfg, key):
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    res = run_attack(params, samples[None, :], [int(y)], cfg, keys=[key])[0]
    if isinstance(w, Waveform):
        res.adversarial = Waveform(res.adversarial.samples, w.sample_rate_hz)
    return res


def attack_time(params, w, y, cfg: AttackConfig, key=0) -> AttackResult:
    if cfg.domain is not Domain.TIME:
        raise ConfigError("attack_time needs a TIME config")
    return _single(params, w, y, cfg, key)


def attack_freq_selective(params, w, y, cfg: AttackConfig, key=0) -> AttackResult:
    if cfg.domain is not Domain.FREQ_MAGNITUDE:
        raise ConfigError("attack_freq_selective needs a FREQ_MAGNITUDE config")
    return _single(params, w, y, cfg, key)


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridEntry:
    config: AttackConfig
    source: str = "A"

    @property
    def condition(self):
        return f"{self.config.label} src={self.source}"


GRID_SCHEDULE = ((2, 1), (5, 1), (5, 2))
GRID_BANDS = ((0.0, 8000.0), (2000.0, 8000.0), (4000.0, 8000.0), (6000.0, 8000.0))


def standard_grid(sources=("A", "A'", "B"), schedule=GRID_SCHEDULE, bands=GRID_BANDS,
                  stft=StftConfig(), seed=0, **overrides):
    """Time domain plus one frequency domain per band, each crossed with
    ``schedule`` (iterations, restarts) and the attack ``sources``.

    Restarts beyond the first start from a random point; the first starts at zero.
    """
    grid = []
    domains = [None] + list(bands)
    for band in domains:
        for source in sources:
            for k, r in schedule:
                kw = dict(iterations=k, restarts=r, seed=seed, stft=stft, **overrides)
                if band is None:
                    cfg = time_attack_config(**kw)
                else:
                    cfg = freq_attack_config(*band, **kw)
                grid.append(GridEntry(cfg, source))
    return grid


def _batched(n, batch_size):
    for start in range(0, n, batch_size):
        yield slice(start, min(n, start + batch_size))


def attack_dataset(params, X, y, cfg, surrogate=None, batch_size=32):
    """Adversarial versions of every row of X, crafted on ``surrogate`` (default: params).

    Returns ``(X_adv, n_errors)``; clips whose attack fails are kept clean and counted.
    """
    source = params if surrogate is None else surrogate
    X_adv = np.array(X, dtype=np.float64, copy=True)
    errors = 0
    for sl in _batched(len(X), batch_size):
        keys = np.arange(sl.start, sl.stop)
        try:
            X_adv[sl] = run_attack(source, X[sl], y[sl], cfg, keys=keys).adversarial
        except AttackError:
            for i in keys:
                try:
                    X_adv[i] = run_attack(source, X[i:i + 1], y[i:i + 1], cfg, keys=[i]).adversarial[0]
                except AttackError:
                    errors += 1
    return X_adv, errors


def attack_grid(params, dataset, grid, surrogates=None, threshold=0.5, batch_size=32):
    """Per-class accuracy at ``threshold`` on attacked clips, one row per grid entry.

    ``dataset`` is ``(X, y)`` or a list of LabeledClip. Sources other than "A"
    (white-box on ``params``) must be present in ``surrogates``. Each row also
    carries the full ``EvalReport`` under ``"report"``; an absent class gives
    ``None`` accuracy.
    """
    from .evaluation import predict_scores, report_from_scores, stack_clips

    if not grid:
        raise ConfigError("attack grid is empty")
    X, y = stack_clips(dataset)
    if len(X) == 0:
        raise ConfigError("attack grid needs a non-empty dataset")
    surrogates = dict(surrogates or {})
    rows = []
    for entry in grid:
        entry = entry if isinstance(entry, GridEntry) else GridEntry(entry)
        if entry.source == "A":
            surrogate = None
        elif entry.source in surrogates:
            surrogate = surrogates[entry.source]
        else:
            raise ConfigError(f"no surrogate parameters for attack source {entry.source!r}")
        X_adv, errors = attack_dataset(params, X, y, entry.config, surrogate, batch_size)
        report = report_from_scores(predict_scores(params, X_adv), y, threshold, entry.condition)
        rows.append({
            "condition": entry.condition,
            "config": entry.config,
            "source": entry.source,
            "acc_real": report.acc_real,
            "acc_fake": report.acc_fake,
            "n_errors": errors,
            "report": report,
        })
    return rows
