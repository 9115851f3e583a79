"""Walk through the feature pipeline on a synthesized clip.

Synthesizes one second of band-limited audio, runs the log mel-spectrogram
front end, and prints the intermediate quantities that matter: frame
geometry, filterbank layout, and the resulting feature map.

Run:  python3 demos/01_features_walkthrough.py
"""

import numpy as np

from lidkit.features import FeatureConfig, compute_mfsc, filter_centers_hz, frame_count, hz_to_mel
from lidkit.synthetic import make_clip


def main():
    cfg = FeatureConfig()
    print("frame geometry")
    print(f"  window  {cfg.frame_length * 1000:.0f} ms = {cfg.win_samples} samples")
    print(f"  hop     {cfg.frame_hop * 1000:.0f} ms = {cfg.hop_samples} samples")
    print(f"  1 s of audio -> {frame_count(cfg.sample_rate, cfg)} frames")

    print("\nmel filterbank")
    centers = filter_centers_hz(cfg)
    print(f"  {cfg.n_mels} triangular filters between {cfg.f_min:.0f} and {cfg.f_max:.0f} Hz")
    print(f"  mel(700 Hz) = {hz_to_mel(700.0):.4f}")
    print(f"  first centers (Hz): {np.round(centers[:5], 1)}")
    print(f"  last centers (Hz):  {np.round(centers[-5:], 1)}")

    clip = make_clip(1, np.random.default_rng(0), clip_id="demo")
    fm = compute_mfsc(clip, cfg)
    print(f"\nclip {clip.id!r}: {clip.duration:.2f} s at {clip.sample_rate} Hz")
    print(f"feature map: {fm.n_frames} frames x {fm.n_bins} bins")
    print(f"energy range: [{fm.data.min():.2f}, {fm.data.max():.2f}] (log scale)")
    hot = np.argmax(fm.data.mean(axis=0))
    print(f"most energetic bin: {hot} (center {centers[hot]:.0f} Hz)")


if __name__ == "__main__":
    main()
