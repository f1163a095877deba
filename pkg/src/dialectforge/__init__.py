"""dialect-forge: pipeline toolkit for low-resource dialect ASR development.

Modules:
    corpus        manifest data model, validation, stats, combination
    artext        Arabic text processing and diacritic density
    metrics       edit distance, alignments, WER/CER scoring
    augment       self-training and TTS augmentation stages
    backend       pluggable ASR/TTS backend protocol and client
    mock_backend  deterministic mock backend for tests and dry runs
    analysis      error taxonomy over evaluation alignments
    cli           command-line interface
"""

__version__ = "0.1.0"
