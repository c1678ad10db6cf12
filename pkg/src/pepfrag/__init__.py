"""Peptide ground-state energies by fragmentation into amino acids and
reassembly with chemical corrections, on a built-in HF/STO-3G engine."""

__version__ = "0.1.0"
