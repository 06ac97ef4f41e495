"""Phonocardiogram screening with per-beat MFCC features.

Pipeline: resample to 1000 Hz and band-pass 25-400 Hz, segment into
S1/systole/S2/diastole, compute 52 MFCC features per beat, and classify a
recording from its first nine beats with either one classifier on the
averaged features or a nine-member per-beat majority vote.
"""
__version__ = "0.1.0"
