"""Tracker variants: each predicts the next span of one linear object.

All trackers share the same life cycle. :func:`init_tracker` seeds one from
an observation, :meth:`Tracker.predict` returns the expected span at a later
scene without touching the state, and :meth:`Tracker.integrate` absorbs the
observation matched at that scene.

Scene gaps are handled explicitly: ``dt`` below is the number of scenes
since the last integrated observation.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .extraction import Observation


class TrackerKind(str, enum.Enum):
    LAST_OBSERVATION = "last-obs"
    SMA = "sma"
    EMA = "ema"
    DOUBLE_EXPONENTIAL = "double-exp"
    ONE_EURO = "one-euro"
    KALMAN = "kalman"

    @classmethod
    def parse(cls, name: str) -> "TrackerKind":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown tracker {name!r}; valid names: {valid}") from None


@dataclass(frozen=True)
class TrackerParams:
    sma_cap: int = 30
    ema_horizon: int = 16
    double_exp_alpha: float = 0.6
    one_euro_min_cutoff: float = 1.0
    one_euro_beta: float = 0.007
    one_euro_d_cutoff: float = 1.0
    kalman_q: float = 1e-5
    kalman_p0: float = 1.0
    kalman_r: tuple[float, float, float] = (1.0, 1.0, 4.0)
    stats_window: int = 30
    sigma_floor_slope: float = 0.5
    sigma_floor_thickness: float = 0.5
    sigma_floor_luminance: float = 5.0

    def __post_init__(self):
        positive = {
            "sma_cap": self.sma_cap,
            "ema_horizon": self.ema_horizon,
            "one_euro_min_cutoff": self.one_euro_min_cutoff,
            "one_euro_beta": self.one_euro_beta,
            "one_euro_d_cutoff": self.one_euro_d_cutoff,
            "kalman_q": self.kalman_q,
            "kalman_p0": self.kalman_p0,
            "stats_window": self.stats_window,
            "sigma_floor_slope": self.sigma_floor_slope,
            "sigma_floor_thickness": self.sigma_floor_thickness,
            "sigma_floor_luminance": self.sigma_floor_luminance,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")
        if not 0 < self.double_exp_alpha < 1:
            raise ValueError("double_exp_alpha must lie in (0, 1)")
        if len(self.kalman_r) != 3 or min(self.kalman_r) <= 0:
            raise ValueError("kalman_r must hold three positive variances")


@dataclass(frozen=True)
class Prediction:
    position: float
    thickness: float
    luminance: float


class Tracker:
    """Base class holding the span list and the matching statistics."""

    kind: TrackerKind

    def __init__(self, obs: Observation, params: TrackerParams):
        self.params = params
        self.spans: list[Observation] = [obs]
        self.history: deque[Observation] = deque([obs], maxlen=params.stats_window)
        # per-attribute windows for the statistics (slopes need two observations)
        self._slopes: deque[float] = deque(maxlen=params.stats_window - 1 or 1)
        self._thick: deque[float] = deque([obs.thickness], maxlen=params.stats_window)
        self._lum: deque[float] = deque([obs.luminance], maxlen=params.stats_window)
        self.first_scene = obs.scene
        self.last_matched_scene = obs.scene
        self.last_obs = obs
        self.pending: list[Observation] = []
        self._sigmas = None

    # -- to be provided by variants -------------------------------------
    def _predict(self, dt: int) -> Prediction:
        raise NotImplementedError

    def _update(self, obs: Observation, dt: int):
        raise NotImplementedError

    # -------------------------------------------------------------------
    @property
    def last_integrated_scene(self) -> int:
        return self.last_obs.scene

    @property
    def last_supported_scene(self) -> int:
        """Last scene with an integrated or provisional span."""
        return self.pending[-1].scene if self.pending else self.last_matched_scene

    def predict(self, scene: int) -> Prediction:
        dt = scene - self.last_integrated_scene
        if dt < 1:
            raise ValueError(f"cannot predict scene {scene} from scene {self.last_integrated_scene}")
        return self._predict(dt)

    def integrate(self, obs: Observation, scene: int):
        if obs.scene != scene:
            raise ValueError("observation scene does not match")
        dt = scene - self.last_integrated_scene
        if dt < 1:
            raise ValueError(f"scene {scene} is not after {self.last_integrated_scene}")
        self._update(obs, dt)
        self._slopes.append((obs.position - self.last_obs.position) / dt)
        self._thick.append(obs.thickness)
        self._lum.append(obs.luminance)
        self.last_obs = obs
        self.history.append(obs)
        self._sigmas = None
        self.spans.extend(self.pending)
        self.pending.clear()
        self.spans.append(obs)
        self.last_matched_scene = scene

    def attach(self, obs: Observation):
        """Hold ``obs`` as a provisional span, e.g. where the object is overlapped.

        Provisional spans leave the model untouched. They join ``spans`` only
        if a later observation is integrated, and are dropped otherwise.
        """
        if obs.scene <= self.last_supported_scene:
            raise ValueError("spans must be strictly increasing in scene")
        self.pending.append(obs)

    def attribute_sigmas(self) -> tuple[float, float, float]:
        """Floored population std of slope, thickness and luminance."""
        if self._sigmas is None:
            p = self.params
            s_slope = _pstdev(self._slopes) if len(self.history) > 1 else 0.0
            s_thick = _pstdev(self._thick)
            s_lum = _pstdev(self._lum)
            self._sigmas = (
                max(s_slope, p.sigma_floor_slope),
                max(s_thick, p.sigma_floor_thickness),
                max(s_lum, p.sigma_floor_luminance),
            )
        return self._sigmas

    def __repr__(self):
        return (f"{type(self).__name__}(scenes={self.first_scene}..{self.last_matched_scene}, "
                f"spans={len(self.spans)})")


def _pstdev(values) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) * (v - mean) for v in values) / n)


class LastObservationTracker(Tracker):
    kind = TrackerKind.LAST_OBSERVATION

    def _predict(self, dt):
        o = self.last_obs
        return Prediction(o.position, o.thickness, o.luminance)

    def _update(self, obs, dt):
        pass


def _ema_alpha(t: int, horizon: int) -> float:
    return 2.0 / (min(t, horizon) + 1)


class SMATracker(Tracker):
    """Mean of the last ``sma_cap`` observations; position follows an EMA slope."""

    kind = TrackerKind.SMA

    def __init__(self, obs, params):
        super().__init__(obs, params)
        self.buffer: deque[Observation] = deque([obs], maxlen=params.sma_cap)
        self.slope = 0.0

    def _predict(self, dt):
        n = len(self.buffer)
        thickness = math.fsum(o.thickness for o in self.buffer) / n
        luminance = math.fsum(o.luminance for o in self.buffer) / n
        return Prediction(self.last_obs.position + dt * self.slope, thickness, luminance)

    def _update(self, obs, dt):
        a = _ema_alpha(obs.scene - self.first_scene, self.params.ema_horizon)
        sample = (obs.position - self.last_obs.position) / dt
        self.slope = a * sample + (1 - a) * self.slope
        self.buffer.append(obs)


class EMATracker(Tracker):
    """Exponential moving average of thickness, luminance and slope."""

    kind = TrackerKind.EMA

    def __init__(self, obs, params):
        super().__init__(obs, params)
        self.thickness = obs.thickness
        self.luminance = obs.luminance
        self.slope = 0.0

    def _predict(self, dt):
        return Prediction(self.last_obs.position + dt * self.slope, self.thickness, self.luminance)

    def _update(self, obs, dt):
        # weight of the prediction made for the scene following ``obs``
        a = _ema_alpha(obs.scene - self.first_scene + 1, self.params.ema_horizon)
        sample = (obs.position - self.last_obs.position) / dt
        self.slope = a * sample + (1 - a) * self.slope
        self.thickness = a * obs.thickness + (1 - a) * self.thickness
        self.luminance = a * obs.luminance + (1 - a) * self.luminance


class DoubleExponentialTracker(Tracker):
    """Brown's double exponential smoothing on all three attributes."""

    kind = TrackerKind.DOUBLE_EXPONENTIAL

    def __init__(self, obs, params):
        super().__init__(obs, params)
        v = np.array([obs.position, obs.thickness, obs.luminance])
        self.s1 = v.copy()
        self.s2 = v.copy()

    def _predict(self, dt):
        a = self.params.double_exp_alpha
        k = a / (1 - a)
        one_step = (2 + k) * self.s1 - (1 + k) * self.s2
        position = (2 + dt * k) * self.s1[0] - (1 + dt * k) * self.s2[0]
        return Prediction(float(position), float(one_step[1]), float(one_step[2]))

    def _update(self, obs, dt):
        a = self.params.double_exp_alpha
        v = np.array([obs.position, obs.thickness, obs.luminance])
        self.s1 = a * v + (1 - a) * self.s1
        self.s2 = a * self.s1 + (1 - a) * self.s2


class OneEuroFilter:
    """Low-pass filter whose cutoff rises with the signal speed.

    The sample period ``te`` may vary between calls.
    """

    def __init__(self, x0: float, min_cutoff: float, beta: float, d_cutoff: float):
        self.min_cutoff = min_cutoff
        self.beta = beta
        self.d_cutoff = d_cutoff
        self.x_prev = x0
        self.x_hat = x0
        self.dx_hat = 0.0

    @staticmethod
    def alpha(cutoff: float, te: float) -> float:
        tau = 1.0 / (2 * math.pi * cutoff)
        return 1.0 / (1.0 + tau / te)

    def __call__(self, x: float, te: float) -> float:
        dx = (x - self.x_prev) / te
        a_d = self.alpha(self.d_cutoff, te)
        self.dx_hat = a_d * dx + (1 - a_d) * self.dx_hat
        cutoff = self.min_cutoff + self.beta * abs(self.dx_hat)
        a = self.alpha(cutoff, te)
        self.x_hat = a * x + (1 - a) * self.x_hat
        self.x_prev = x
        return self.x_hat


class OneEuroTracker(Tracker):
    """1-euro filtered attributes; position is extrapolated by the filtered derivative."""

    kind = TrackerKind.ONE_EURO

    def __init__(self, obs, params):
        super().__init__(obs, params)
        args = (params.one_euro_min_cutoff, params.one_euro_beta, params.one_euro_d_cutoff)
        self.filters = [OneEuroFilter(obs.position, *args),
                        OneEuroFilter(obs.thickness, *args),
                        OneEuroFilter(obs.luminance, *args)]

    def _predict(self, dt):
        fp, ft, fl = self.filters
        return Prediction(fp.x_hat + dt * fp.dx_hat, ft.x_hat, fl.x_hat)

    def _update(self, obs, dt):
        for f, v in zip(self.filters, (obs.position, obs.thickness, obs.luminance)):
            f(v, float(dt))


class KalmanTracker(Tracker):
    """Constant-velocity Kalman filter over position, thickness and luminance.

    With P0 and Q proportional to the identity, a diagonal R and H reading
    position, thickness and luminance separately, the covariance stays block
    diagonal: a 2x2 (position, slope) block plus two scalars. The filter is
    run in that form, which is exact and avoids small matrix products.
    ``state`` and ``P`` expose the full 4-vector and 4x4 matrix.
    """

    kind = TrackerKind.KALMAN

    def __init__(self, obs, params):
        super().__init__(obs, params)
        p0 = params.kalman_p0
        self._x = [obs.position, 0.0, obs.thickness, obs.luminance]
        # position/slope block [[a, b], [b, c]], thickness and luminance variances
        self._pb = [p0, 0.0, p0]
        self._pt = p0
        self._pl = p0
        self._prior = None

    @property
    def state(self) -> np.ndarray:
        return np.array(self._x)

    @property
    def P(self) -> np.ndarray:
        a, b, c = self._pb
        return np.array([[a, b, 0.0, 0.0],
                         [b, c, 0.0, 0.0],
                         [0.0, 0.0, self._pt, 0.0],
                         [0.0, 0.0, 0.0, self._pl]])

    def prior(self, dt: int):
        """State and covariance blocks after ``dt`` transitions A(.)A' + Q."""
        if self._prior is not None and self._prior[0] == dt:
            return self._prior[1]
        q = self.params.kalman_q
        pos, slope, th, lum = self._x
        a, b, c = self._pb
        # sum over k < dt of A^k Q A^k'
        sk = dt * (dt - 1) / 2
        sk2 = (dt - 1) * dt * (2 * dt - 1) / 6
        out = (
            (pos + dt * slope, slope, th, lum),
            (a + 2 * dt * b + dt * dt * c + q * (dt + sk2), b + dt * c + q * sk, c + q * dt),
            self._pt + q * dt,
            self._pl + q * dt,
        )
        self._prior = (dt, out)
        return out

    def _predict(self, dt):
        (pos, _, th, lum), *_ = self.prior(dt)
        return Prediction(pos, th, lum)

    def _update(self, obs, dt):
        (pos, slope, th, lum), (a, b, c), pt, pl = self.prior(dt)
        r_pos, r_th, r_lum = self.params.kalman_r
        s = a + r_pos
        k0, k1 = a / s, b / s
        y = obs.position - pos
        g_t = pt / (pt + r_th)
        g_l = pl / (pl + r_lum)
        self._x = [pos + k0 * y, slope + k1 * y,
                   th + g_t * (obs.thickness - th), lum + g_l * (obs.luminance - lum)]
        # (I - KH) P, written symmetric
        self._pb = [a * r_pos / s, b * r_pos / s, c - b * b / s]
        self._pt = pt * r_th / (pt + r_th)
        self._pl = pl * r_lum / (pl + r_lum)
        self._prior = None


_VARIANTS = {cls.kind: cls for cls in (LastObservationTracker, SMATracker, EMATracker,
                                       DoubleExponentialTracker, OneEuroTracker, KalmanTracker)}


def init_tracker(kind: TrackerKind | str, obs: Observation,
                 params: TrackerParams | None = None) -> Tracker:
    if isinstance(kind, str):
        kind = TrackerKind.parse(kind)
    return _VARIANTS[kind](obs, params or TrackerParams())
