"""Pulse-sequence construction for sevenfold-symmetric dipolar recoupling.

The canonical sequence is a train of C elements, each made of two pulses
with a 180 degree internal phase offset, repeated seven times per cycle
with the element phase advancing by 2*pi/7, the whole cycle spanning two
rotor periods.  The relaxed family keeps the sevenfold phase ladder and
the 14-pulse cycle but frees both pulse durations, both amplitudes, both
base phases and the cycle count, giving seven search parameters.

Conventions: amplitudes in Hz, durations in seconds, event phases in
radians.  The two base phases carried by :class:`SequenceParams` are in
degrees, matching the units used at every file and table boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi

#: Elements per cycle (the "7" of C7), rotor periods per cycle and spin
#: winding number of the symmetry the relaxed family descends from.
N_ELEMENTS = 7
CYCLE_ROTOR_PERIODS = 2
SPIN_WINDING = 1


@dataclass(frozen=True)
class PulseEvent:
    """One piecewise-constant r.f. event.

    amplitude : nutation frequency in Hz
    phase     : r.f. phase in radians
    duration  : seconds, strictly positive
    """

    amplitude: float
    phase: float
    duration: float

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError(f"pulse duration must be > 0, got {self.duration}")
        if self.amplitude < 0.0:
            raise ValueError(f"pulse amplitude must be >= 0, got {self.amplitude}")


@dataclass(frozen=True)
class PulseSequence:
    """Ordered pulse events plus a global phase offset (radians).

    The offset supports the 90 degree reconversion shift without
    rebuilding the event list; effective phases are event.phase + offset.
    """

    events: tuple[PulseEvent, ...]
    phase_offset: float = 0.0

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def with_phase_offset(self, delta: float) -> "PulseSequence":
        return PulseSequence(self.events, self.phase_offset + delta)

    def effective_phases(self):
        return [ev.phase + self.phase_offset for ev in self.events]

    @property
    def duration(self) -> float:
        return sum(ev.duration for ev in self.events)


@dataclass(frozen=True)
class SequenceParams:
    """The seven search parameters of the relaxed sevenfold family.

    tau1, tau2     : pulse durations (s)
    kappa1, kappa2 : r.f. amplitudes (Hz)
    phi1, phi2     : base phases (degrees); the second pulse of each
                     element additionally carries the hard-wired +180
    n_blocks       : number of cycles in the excitation block
    """

    tau1: float
    tau2: float
    kappa1: float
    kappa2: float
    phi1: float = 0.0
    phi2: float = 0.0
    n_blocks: int = 1

    def __post_init__(self):
        if self.tau1 <= 0.0 or self.tau2 <= 0.0:
            raise ValueError("pulse durations must be > 0")
        if self.kappa1 <= 0.0 or self.kappa2 <= 0.0:
            raise ValueError("r.f. amplitudes must be > 0")
        if int(self.n_blocks) != self.n_blocks or self.n_blocks < 1:
            raise ValueError(f"n_blocks must be a positive integer, got {self.n_blocks}")


@dataclass(frozen=True)
class C7Defaults:
    """Rotor-synchronised defaults fixed by the sevenfold symmetry rules.

    kappa_c = 7 * rotor frequency, a 2*pi pulse lasts tau_c = 1/kappa_c,
    and the element phase increment is 2*pi/7.
    """

    kappa_c: float
    tau_c: float
    phase_increment: float
    theta_c: float = TWO_PI
    n_elements: int = N_ELEMENTS
    cycle_rotor_periods: int = CYCLE_ROTOR_PERIODS
    spin_winding: int = SPIN_WINDING


def c7_defaults(rotor_freq: float) -> C7Defaults:
    """Default amplitude/duration/phase-step for a given spinning speed (Hz)."""
    if rotor_freq <= 0.0:
        raise ValueError(f"rotor frequency must be > 0, got {rotor_freq}")
    kappa_c = (2.0 * N_ELEMENTS / CYCLE_ROTOR_PERIODS) * rotor_freq
    return C7Defaults(
        kappa_c=kappa_c,
        tau_c=1.0 / kappa_c,
        phase_increment=TWO_PI * SPIN_WINDING / N_ELEMENTS,
    )


def default_params(rotor_freq: float, n_blocks: int = 31) -> SequenceParams:
    """SequenceParams at the rotor-synchronised defaults."""
    d = c7_defaults(rotor_freq)
    return SequenceParams(
        tau1=d.tau_c, tau2=d.tau_c,
        kappa1=d.kappa_c, kappa2=d.kappa_c,
        phi1=0.0, phi2=0.0, n_blocks=n_blocks,
    )


def build_c7opt(params: SequenceParams, rotor_freq: float | None = None) -> PulseSequence:
    """Build the 14*n_blocks event list of the relaxed sevenfold sequence.

    The element phase increment advances by 2*pi/7 per element,
    continuously across blocks; since seven steps add up to a full turn,
    consecutive blocks carry identical phase patterns.  ``rotor_freq`` is
    accepted for interface symmetry with :func:`c7_defaults` but does not
    enter the construction (the synchronisation condition is a property
    of the parameter values, not of the builder).
    """
    inc = TWO_PI * SPIN_WINDING / N_ELEMENTS
    phi1 = math.radians(params.phi1)
    phi2 = math.radians(params.phi2) + math.pi  # hard-wired 180 on pulse 2
    events = []
    for i in range(N_ELEMENTS * params.n_blocks):
        step = (i % N_ELEMENTS) * inc
        events.append(PulseEvent(params.kappa1, (phi1 + step) % TWO_PI, params.tau1))
        events.append(PulseEvent(params.kappa2, (phi2 + step) % TWO_PI, params.tau2))
    return PulseSequence(tuple(events))


def asynchrony(dtau1: float, dtau2: float) -> float:
    """Drift of one cycle against the rotor period for duration offsets (s)."""
    return (N_ELEMENTS / 2.0) * (dtau1 + dtau2)


def flip_angle(kappa: float, tau: float) -> float:
    """Pulse flip angle in radians for amplitude kappa (Hz) and duration tau (s)."""
    if kappa <= 0.0 or tau <= 0.0:
        raise ValueError("flip_angle requires kappa > 0 and tau > 0")
    return TWO_PI * kappa * tau


def excitation_time(params: SequenceParams) -> float:
    """Total duration of the excitation block (s)."""
    return params.n_blocks * N_ELEMENTS * (params.tau1 + params.tau2)
