"""Symbolic music structure analysis (variable Markov oracle, information rate) and a numpy CVRNN."""

from .analysis import AnalysisReport, analyze_file, analyze_roll
from .features import ChromaSequence, chroma_from_piano_roll, distance_matrix
from .midi_io import PianoRoll, parse_smf, piano_roll_to_frames, quantize, read_midi, write_midi, write_smf
from .oracle import build_oracle, compror_encode, find_motifs, information_rate, sweep_threshold

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport", "ChromaSequence", "PianoRoll", "analyze_file", "analyze_roll", "build_oracle",
    "chroma_from_piano_roll", "compror_encode", "distance_matrix", "find_motifs", "information_rate",
    "parse_smf", "piano_roll_to_frames", "quantize", "read_midi", "sweep_threshold", "write_midi", "write_smf",
]
