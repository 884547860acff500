"""
Сегментация сигнала запястья на циклы пальце-носовой пробы

Концы движения оцениваются по средней половине сигнала, переходы через
середину находятся гистерезисным порогом (60% вперед, 40% назад), а циклы
строятся в той разметке (палец-нос-палец или нос-палец-нос), которая дает
больше полных циклов.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DegenerateRange, InvalidParameter, NoCycles, NoEvents
from .signal_core import RelativeSignal

logger = logging.getLogger(__name__)

DEFAULT_FWD_FRAC = 0.6
DEFAULT_BWD_FRAC = 0.4
MIN_SIGNAL_LENGTH = 8


class EventKind(str, Enum):
    FORWARD = "F"    # к пальцу врача
    BACKWARD = "B"   # к носу


class Designation(str, Enum):
    FINGER_NOSE_FINGER = "finger_nose_finger"
    NOSE_FINGER_NOSE = "nose_finger_nose"


@dataclass(frozen=True)
class Endpoints:
    """Положения носа (near) и пальца врача (far) в единицах сигнала"""
    near: float
    far: float

    def __post_init__(self):
        if not self.far > self.near:
            raise InvalidParameter(f"far ({self.far}) must exceed near ({self.near})")

    @property
    def span(self) -> float:
        return self.far - self.near

    def level(self, fraction: float) -> float:
        return self.near + fraction * self.span


@dataclass(frozen=True)
class Event:
    kind: EventKind
    frame: int


@dataclass(frozen=True)
class Cycle:
    """Цикл [start, end) с переходом через середину в кадре mid"""
    start: int
    mid: int
    end: int

    def __post_init__(self):
        if not self.start < self.mid < self.end:
            raise InvalidParameter(f"cycle frames must satisfy start < mid < end: {self}")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class CycleSet:
    """Циклы и отброшенные участки, вместе покрывающие [0, n_frames)"""
    designation: Designation
    cycles: Tuple[Cycle, ...]
    discarded_spans: Tuple[Tuple[int, int], ...]
    n_frames: int

    def __post_init__(self):
        object.__setattr__(self, "designation", Designation(self.designation))
        object.__setattr__(self, "cycles", tuple(self.cycles))
        object.__setattr__(self, "discarded_spans", tuple(tuple(s) for s in self.discarded_spans))

        for prev, cur in zip(self.cycles, self.cycles[1:]):
            if cur.start < prev.end:
                raise InvalidParameter("cycles overlap or are out of order")

        spans = sorted(
            [(c.start, c.end) for c in self.cycles] + [tuple(s) for s in self.discarded_spans]
        )
        position = 0
        for lo, hi in spans:
            if lo != position or hi <= lo:
                raise InvalidParameter(f"spans do not partition [0, {self.n_frames}) at frame {position}")
            position = hi
        if position != self.n_frames:
            raise InvalidParameter(f"spans cover [0, {position}) instead of [0, {self.n_frames})")

    def __len__(self) -> int:
        return len(self.cycles)

    def half_durations(self) -> Tuple[np.ndarray, np.ndarray]:
        """Длительности в кадрах: (нос->палец, палец->нос)

        В разметке палец-нос-палец первая половина цикла идет к носу,
        в разметке нос-палец-нос - к пальцу.
        """
        first = np.array([c.mid - c.start for c in self.cycles], dtype=float)
        second = np.array([c.end - c.mid for c in self.cycles], dtype=float)
        if self.designation == Designation.NOSE_FINGER_NOSE:
            return first, second
        return second, first

    def spans(self) -> List[Tuple[int, int]]:
        return [(c.start, c.end) for c in self.cycles]


def estimate_endpoints(signal: RelativeSignal) -> Endpoints:
    """Минимум и максимум x по средней половине сигнала"""
    n = len(signal)
    if n < MIN_SIGNAL_LENGTH:
        raise InvalidParameter(f"signal needs at least {MIN_SIGNAL_LENGTH} samples, got {n}")
    middle = signal.x[n // 4:(3 * n) // 4]
    near = float(middle.min())
    far = float(middle.max())
    if far <= near:
        raise DegenerateRange("signal is constant over its middle half")
    return Endpoints(near=near, far=far)


def hysteresis_events(signal: RelativeSignal, endpoints: Endpoints,
                      fwd_frac: float = DEFAULT_FWD_FRAC,
                      bwd_frac: float = DEFAULT_BWD_FRAC) -> List[Event]:
    """Гистерезисное обнаружение движений вперед и назад

    FORWARD - первый кадр строго выше порога вперед в нижнем состоянии,
    BACKWARD - первый кадр строго ниже порога назад в верхнем состоянии.
    Начальное состояние задается стороной первого отсчета от середины.
    """
    if not (0 < bwd_frac < fwd_frac < 1):
        raise InvalidParameter(f"need 0 < bwd_frac < fwd_frac < 1, got {bwd_frac}, {fwd_frac}")

    x = signal.x
    upper = endpoints.level(fwd_frac)
    lower = endpoints.level(bwd_frac)
    high = bool(x[0] > endpoints.level(0.5))

    events: List[Event] = []
    for t in range(1, len(x)):
        if not high and x[t] > upper:
            events.append(Event(EventKind.FORWARD, t))
            high = True
        elif high and x[t] < lower:
            events.append(Event(EventKind.BACKWARD, t))
            high = False

    if not events:
        raise NoEvents("signal never crosses the hysteresis thresholds")
    return events


def _triples(events: Sequence[Event], first_kind: EventKind) -> List[Cycle]:
    return [
        Cycle(events[i].frame, events[i + 1].frame, events[i + 2].frame)
        for i in range(len(events) - 2)
        if events[i].kind == first_kind
    ]


def build_cycles(events: Sequence[Event], n_frames: int) -> CycleSet:
    """Построение циклов по событиям

    Палец-нос-палец - тройки B,F,B; нос-палец-нос - тройки F,B,F; соседние
    циклы делят граничное событие. Побеждает разметка с большим числом
    циклов, при равенстве - палец-нос-палец.
    """
    for prev, cur in zip(events, events[1:]):
        if prev.kind == cur.kind or cur.frame <= prev.frame:
            raise InvalidParameter("events must strictly alternate and increase in time")

    fnf = _triples(events, EventKind.BACKWARD)
    nfn = _triples(events, EventKind.FORWARD)
    if not fnf and not nfn:
        raise NoCycles(f"{len(events)} events form no complete cycle")

    if len(nfn) > len(fnf):
        designation, cycles = Designation.NOSE_FINGER_NOSE, nfn
    else:
        designation, cycles = Designation.FINGER_NOSE_FINGER, fnf

    discarded = []
    if cycles[0].start > 0:
        discarded.append((0, cycles[0].start))
    for prev, cur in zip(cycles, cycles[1:]):
        if cur.start > prev.end:
            discarded.append((prev.end, cur.start))
    if cycles[-1].end < n_frames:
        discarded.append((cycles[-1].end, n_frames))

    logger.debug(f"Segmented {len(cycles)} cycles as {designation.value} "
                 f"(fnf={len(fnf)}, nfn={len(nfn)})")
    return CycleSet(
        designation=designation,
        cycles=tuple(cycles),
        discarded_spans=tuple(discarded),
        n_frames=n_frames,
    )


def segment_signal(signal: RelativeSignal, fwd_frac: float = DEFAULT_FWD_FRAC,
                   bwd_frac: float = DEFAULT_BWD_FRAC) -> CycleSet:
    """Полная сегментация: концы, события, циклы"""
    endpoints = estimate_endpoints(signal)
    events = hysteresis_events(signal, endpoints, fwd_frac, bwd_frac)
    return build_cycles(events, len(signal))
