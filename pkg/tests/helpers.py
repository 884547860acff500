import numpy as np

from barsrate.signal_core import KeypointTrack, RelativeSignal


def make_track(joint, x, y=None, confidence=None, fps=30.0):
    """Трек из массивов с уверенностью 1 по умолчанию"""
    x = np.asarray(x, dtype=float)
    y = np.zeros_like(x) if y is None else np.asarray(y, dtype=float)
    confidence = np.ones_like(x) if confidence is None else np.asarray(confidence, dtype=float)
    return KeypointTrack(joint, x, y, confidence, fps)


def make_signal(x, y=None, fps=30.0):
    x = np.asarray(x, dtype=float)
    y = np.zeros_like(x) if y is None else np.asarray(y, dtype=float)
    return RelativeSignal(x=x, y=y, fps=fps, valid_mask=np.ones(len(x), dtype=bool))


def oscillation(n_cycles=4, samples_per_cycle=40, rest=10):
    """Покой у носа, n_cycles косинусных выходов к пальцу, покой"""
    phase = np.linspace(0.0, n_cycles, n_cycles * samples_per_cycle, endpoint=False)
    wave = (1.0 - np.cos(2 * np.pi * phase)) / 2.0
    return np.concatenate([np.zeros(rest), wave, np.zeros(rest)])
