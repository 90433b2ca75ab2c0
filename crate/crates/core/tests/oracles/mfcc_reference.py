"""Reference feature extractor used to freeze expected values for the MFCC
oracle test. Written against numpy/scipy, independently of the Rust code.

Regenerate with:  python3 crates/core/tests/oracles/mfcc_reference.py
"""
import json
import pathlib
import wave

import numpy as np
from scipy.fft import dct

SR = 16000
N = 2048
H = 512
M = 40
K = 40
SECONDS = 1.0
HERE = pathlib.Path(__file__).resolve().parent
FIXTURES = HERE.parent / "fixtures"


def write_pcm16(path, x):
    q = np.clip(np.floor(np.clip(x, -1.0, 1.0) * 32768.0 + 0.5), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SR)
        w.writeframes(q.tobytes())


def read_pcm16(path):
    with wave.open(str(path), "rb") as w:
        data = np.frombuffer(w.readframes(w.getnframes()), dtype="<i2")
    return data.astype(np.float64) / 32768.0


def make_fixtures():
    t = np.arange(int(SR * SECONDS)) / SR
    sine = 0.5 * np.sin(2 * np.pi * 440.0 * t)
    f0, f1 = 200.0, 3000.0
    chirp = 0.3 * np.sin(2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / SECONDS * t**2))
    rng = np.random.RandomState(1234)
    burst = np.zeros_like(t)
    lo, hi = len(t) // 3, 2 * len(t) // 3
    burst[lo:hi] = 0.4 * rng.uniform(-1.0, 1.0, hi - lo) * np.hanning(hi - lo)
    return {"sine440_16k.wav": sine, "chirp_16k.wav": chirp, "noise_burst_16k.wav": burst}


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def filterbank():
    mels = np.linspace(0.0, hz_to_mel(SR / 2), M + 2)
    edges = np.floor(mel_to_hz(mels) * N / SR + 0.5).astype(int)
    fb = np.zeros((M, N // 2 + 1))
    for j in range(1, M + 1):
        lo, c, hi = edges[j - 1], edges[j], edges[j + 1]
        for k in range(lo + 1, c + 1):
            fb[j - 1, k] = (k - lo) / (c - lo)
        for k in range(c + 1, hi):
            fb[j - 1, k] = (hi - k) / (hi - c)
    return fb


def features(x):
    frames_count = 1 + (int(SR * SECONDS) - N) // H
    need = N + (frames_count - 1) * H
    x = np.concatenate([x[:need], np.zeros(max(0, need - len(x)))])
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(N) / N)
    fb = filterbank()
    zcr, rmse, mfcc = [], [], []
    for t in range(frames_count):
        fr = x[t * H : t * H + N]
        s = np.where(fr >= 0, 1.0, -1.0)
        zcr.append(np.abs(np.diff(s)).sum() / (2 * (N - 1)))
        rmse.append(np.sqrt(np.mean(fr**2)))
        power = np.abs(np.fft.rfft(fr * window)) ** 2
        energies = np.maximum(fb @ power, 1e-10)
        mfcc.append(dct(np.log(energies), type=2, norm="ortho")[:K])
    return {"frames": frames_count, "zcr": zcr, "rmse": rmse, "mfcc": np.array(mfcc).ravel().tolist()}


def main():
    FIXTURES.mkdir(exist_ok=True)
    expected = {"frame_length": N, "hop": H, "num_mel": M, "num_mfcc": K, "sample_rate": SR, "fixtures": {}}
    for name, signal in make_fixtures().items():
        path = FIXTURES / name
        write_pcm16(path, signal)
        expected["fixtures"][name] = features(read_pcm16(path))
    (FIXTURES / "mfcc_expected.json").write_text(json.dumps(expected, indent=1) + "\n")


if __name__ == "__main__":
    main()
