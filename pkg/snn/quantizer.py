"""Membrane-potential quantization grids.

Two grid schemes are supported:

* ``uniform``: ``2**n`` evenly spaced levels between the observed bounds.
* ``exponential``: levels crowd geometrically towards the firing threshold
  from both sides, so the finest resolution sits where spiking decisions
  are made.

``quantize`` snaps values to the nearest grid level (midpoints go to the
lower level) and passes gradients straight through. A ``RangeObserver``
supplies the bounds, either recomputed per forward pass, tracked as a
running estimate or frozen after calibration.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import GridError, ShapeError
from .tensor import Function

logger = logging.getLogger(__name__)

UNIFORM = 'uniform'
EXPONENTIAL = 'exponential'
SCHEMES = (UNIFORM, EXPONENTIAL)

PER_FORWARD = 'per_forward_minmax'
RUNNING = 'running_minmax'
FROZEN = 'frozen'
OBSERVER_MODES = (PER_FORWARD, RUNNING, FROZEN)

MAX_BITS = 16
DEFAULT_RATIO = 2.0
RANGE_EPSILON = 1e-6
# widest gap / finest gap on one side of the threshold
MAX_GAP_SPAN = 4096.0


def normalize_scheme(scheme):
    """Accept the ``exp`` shorthand used on the command line."""
    if scheme == 'exp':
        return EXPONENTIAL
    if scheme not in SCHEMES:
        raise GridError(f"unknown quantization scheme {scheme!r}")
    return scheme


@dataclass(frozen=True, eq=False)
class QuantGrid:
    levels: np.ndarray
    n_bits: int
    scheme: str
    u_min: float
    u_max: float
    theta: float = None
    ratio: float = None

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        object.__setattr__(self, 'levels', levels)
        if levels.shape != (2 ** self.n_bits,):
            raise GridError(f"expected {2 ** self.n_bits} levels, got {levels.shape}")
        if np.any(np.diff(levels) <= 0):
            raise GridError("grid levels are not strictly increasing")
        if levels[0] != self.u_min or levels[-1] != self.u_max:
            raise GridError("grid endpoints do not match its bounds")

    def __len__(self):
        return len(self.levels)

    def __eq__(self, other):
        if not isinstance(other, QuantGrid):
            return NotImplemented
        return (
            self.n_bits == other.n_bits
            and self.scheme == other.scheme
            and self.u_min == other.u_min
            and self.u_max == other.u_max
            and self.theta == other.theta
            and self.ratio == other.ratio
            and np.array_equal(self.levels, other.levels)
        )

    @property
    def gaps(self):
        return np.diff(self.levels)

    def describe(self):
        """JSON-friendly snapshot of the grid."""
        return {
            'scheme': self.scheme,
            'n_bits': self.n_bits,
            'u_min': self.u_min,
            'u_max': self.u_max,
            'theta': self.theta,
            'ratio': self.ratio,
            'levels': [float(level) for level in self.levels],
        }


def _check_bits(n_bits):
    if not isinstance(n_bits, (int, np.integer)) or not 1 <= n_bits <= MAX_BITS:
        raise GridError(f"n_bits must be an integer in [1, {MAX_BITS}], got {n_bits!r}")


def build_uniform_grid(n_bits, u_min, u_max):
    _check_bits(n_bits)
    u_min, u_max = float(u_min), float(u_max)
    if not u_min < u_max:
        raise GridError(f"degenerate or inverted range [{u_min}, {u_max}]")
    count = 2 ** n_bits
    step = (u_max - u_min) / (count - 1)
    levels = u_min + np.arange(count, dtype=np.float64) * step
    levels[-1] = u_max
    return QuantGrid(levels, n_bits, UNIFORM, u_min, u_max)


def _clamp_ratio(ratio, per_side):
    if per_side <= 1:
        return ratio
    cap = MAX_GAP_SPAN ** (1.0 / (per_side - 1))
    if ratio > cap:
        logger.debug(f"Clamping ratio {ratio} to {cap:.6g} for {per_side} levels per side")
        return cap
    return ratio


def _geometric_fractions(ratio, per_side):
    """(r**k - 1) / (r**m - 1) for k = 1..m, accurate as r approaches 1."""
    k = np.arange(1, per_side + 1, dtype=np.float64)
    log_r = np.log(ratio)
    return np.expm1(k * log_r) / np.expm1(per_side * log_r)


def build_exponential_grid(n_bits, u_min, u_max, theta, ratio=DEFAULT_RATIO,
                           ratio_below=None, ratio_above=None, levels_below=None):
    """Threshold-centred grid with geometric spacing on each side of ``theta``.

    By default ``2**(n_bits - 1)`` levels sit on each side and both sides
    share ``ratio``.
    """
    _check_bits(n_bits)
    u_min, u_max, theta = float(u_min), float(u_max), float(theta)
    if not u_min < theta < u_max:
        raise GridError(f"theta {theta} outside ({u_min}, {u_max})")
    for value in (ratio, ratio_below, ratio_above):
        if value is not None and not value > 1.0:
            raise GridError(f"ratio must be > 1, got {value}")

    count = 2 ** n_bits
    below = count // 2 if levels_below is None else int(levels_below)
    above = count - below
    if below < 1 or above < 1:
        raise GridError(f"levels_below must leave levels on both sides, got {levels_below}")

    r_below = _clamp_ratio(ratio_below or ratio, below)
    r_above = _clamp_ratio(ratio_above or ratio, above)
    lower = theta - (theta - u_min) * _geometric_fractions(r_below, below)
    upper = theta + (u_max - theta) * _geometric_fractions(r_above, above)
    levels = np.concatenate([lower[::-1], upper])
    levels[0], levels[-1] = u_min, u_max
    # record the spacing actually used, per side when the sides differ
    effective = float(r_below) if r_below == r_above else [float(r_below), float(r_above)]
    return QuantGrid(levels, n_bits, EXPONENTIAL, u_min, u_max, theta=theta, ratio=effective)


def snap(values, grid):
    """Clip to the grid range and round to the nearest level (ties go down)."""
    levels = grid.levels
    clipped = np.clip(np.asarray(values, dtype=np.float64), grid.u_min, grid.u_max)
    upper_index = np.clip(np.searchsorted(levels, clipped, side='left'), 1, len(levels) - 1)
    lower = levels[upper_index - 1]
    upper = levels[upper_index]
    snapped = np.where(upper - clipped < clipped - lower, upper, lower)
    return snapped.astype(np.asarray(values).dtype)


def ste_backward(upstream_grad):
    """Straight-through estimator: the identity Jacobian, clipped elements included."""
    return upstream_grad


class Quantize(Function):
    custom_backward = True

    def forward(self, u, grid):
        return snap(u, grid)

    def backward(self, grad):
        return ste_backward(grad)


def quantize(u, grid):
    return Quantize.apply(u, grid=grid)


class RangeObserver:
    """Tracks the value range a state quantizer builds its grid from."""

    def __init__(self, mode=PER_FORWARD, momentum=0.1, u_min=None, u_max=None, expand_only=False):
        if mode not in OBSERVER_MODES:
            raise GridError(f"unknown observer mode {mode!r}")
        if not 0.0 < momentum <= 1.0:
            raise GridError(f"observer momentum must be in (0, 1], got {momentum}")
        if (u_min is None) != (u_max is None):
            raise GridError("observer bounds must be given together")
        if u_min is not None and u_min > u_max:
            raise GridError(f"observer bounds inverted: ({u_min}, {u_max})")
        if mode == FROZEN and u_min is None:
            raise GridError("a frozen observer needs bounds")
        self.mode = mode
        self.momentum = momentum
        self.expand_only = expand_only
        self.u_min = None if u_min is None else float(u_min)
        self.u_max = None if u_max is None else float(u_max)

    def __repr__(self):
        return f"RangeObserver(mode={self.mode!r}, bounds={self.bounds})"

    @classmethod
    def frozen(cls, u_min, u_max):
        return cls(FROZEN, u_min=u_min, u_max=u_max)

    @property
    def bounds(self):
        if self.u_min is None:
            return None
        return self.u_min, self.u_max

    def observe(self, values):
        values = np.asarray(values)
        if values.size == 0:
            raise ShapeError("cannot observe an empty tensor")
        if self.mode == FROZEN:
            return self.bounds
        batch_min, batch_max = float(values.min()), float(values.max())
        if self.mode == PER_FORWARD or self.u_min is None:
            self.u_min, self.u_max = batch_min, batch_max
            return self.bounds
        m = self.momentum
        blended_min = (1 - m) * self.u_min + m * batch_min
        blended_max = (1 - m) * self.u_max + m * batch_max
        if self.expand_only:
            blended_min = min(self.u_min, blended_min)
            blended_max = max(self.u_max, blended_max)
        self.u_min, self.u_max = blended_min, blended_max
        return self.bounds


def observe(observer, u):
    return observer.observe(getattr(u, 'data', u))


@dataclass
class StateQuantizer:
    """Grid parameters plus observer attached to one LIF layer.

    During calibration a second, expand-only observer records the full
    range while the layer either keeps quantizing with its training
    observer or passes the membrane through untouched. ``finish_calibration``
    swaps in a frozen observer holding the calibrated bounds.
    """

    n_bits: int
    scheme: str = EXPONENTIAL
    theta: float = 1.0
    ratio: float = DEFAULT_RATIO
    observer_mode: str = PER_FORWARD
    momentum: float = 0.1
    levels_below: int = None
    ratio_below: float = None
    ratio_above: float = None
    observer: RangeObserver = None
    calibration: RangeObserver = field(default=None, repr=False)
    passthrough: bool = False
    _cached: QuantGrid = field(default=None, repr=False)

    def __post_init__(self):
        _check_bits(self.n_bits)
        self.scheme = normalize_scheme(self.scheme)
        if self.observer is None:
            self.observer = self._training_observer()

    def _training_observer(self):
        if self.observer_mode == FROZEN:
            raise GridError("the training observer cannot start frozen")
        return RangeObserver(self.observer_mode, self.momentum)

    def _widened(self, u_min, u_max):
        magnitude = max(1.0, abs(u_min), abs(u_max))
        # keep every level distinct once cast to float32
        resolution = 4 * 2 ** self.n_bits * float(np.spacing(np.float32(magnitude)))
        span = max(RANGE_EPSILON * magnitude, resolution)
        if u_max - u_min < span:
            logger.debug(f"Widening degenerate range [{u_min}, {u_max}]")
            u_min, u_max = u_min - span, u_max + span
        if self.scheme == EXPONENTIAL:
            margin = max(1e-3, 1e-3 * abs(self.theta))
            u_min = min(u_min, self.theta - margin)
            u_max = max(u_max, self.theta + margin)
        return u_min, u_max

    def grid_for(self, u_min, u_max):
        cached = self._cached
        if cached is not None and cached.bounds_key == (u_min, u_max):
            return cached.grid
        lo, hi = self._widened(u_min, u_max)
        if self.scheme == UNIFORM:
            grid = build_uniform_grid(self.n_bits, lo, hi)
        else:
            grid = build_exponential_grid(
                self.n_bits, lo, hi, self.theta, self.ratio,
                ratio_below=self.ratio_below, ratio_above=self.ratio_above,
                levels_below=self.levels_below,
            )
        if self.observer.mode == FROZEN:
            self._cached = _CachedGrid((u_min, u_max), grid)
        return grid

    @property
    def grid(self):
        """The grid of a frozen quantizer, ``None`` while bounds still move."""
        if self.observer.mode != FROZEN:
            return None
        return self.grid_for(*self.observer.bounds)

    def __call__(self, u):
        if self.calibration is not None:
            self.calibration.observe(u.data)
        if self.passthrough:
            return u
        u_min, u_max = self.observer.observe(u.data)
        return quantize(u, self.grid_for(u_min, u_max))

    def begin_calibration(self, quantize_states=True):
        self.calibration = RangeObserver(RUNNING, momentum=1.0, expand_only=True)
        self.passthrough = not quantize_states

    def finish_calibration(self):
        if self.calibration is None or self.calibration.bounds is None:
            raise GridError("calibration finished without observing any state")
        self.freeze(*self.calibration.bounds)
        self.calibration = None
        self.passthrough = False

    def freeze(self, u_min, u_max):
        self.observer = RangeObserver.frozen(u_min, u_max)
        self._cached = None

    def restore(self, u_min, u_max, grid):
        """Freeze onto a previously saved grid without rebuilding it."""
        self.freeze(u_min, u_max)
        self._cached = _CachedGrid((float(u_min), float(u_max)), grid)

    def unfreeze(self):
        self.observer = self._training_observer()
        self._cached = None

    def describe(self):
        grid = self.grid
        return None if grid is None else grid.describe()


@dataclass(frozen=True)
class _CachedGrid:
    bounds_key: tuple
    grid: QuantGrid
