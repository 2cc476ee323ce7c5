"""Character distinctiveness in drama: bootstrap 3-gram energy distance and keyness AUC."""

__version__ = "0.1.0"

from .energy import (BootstrapConfig, DistinctivenessEstimate, ProbabilityVector,
                     baseline_distinctiveness, bootstrap_distinctiveness, energy_distance,
                     pairwise_energy_statistic)
from .ingest import (CharacterSpeech, CorpusDescriptor, IngestionReport, PlayDocument,
                     fetch_corpus, parse_tei)
from .keyness import (KeynessProfile, WordCounts, character_keyness, gender_contrast,
                      weighted_log_odds)
from .report import (AnalysisRow, CorpusSummary, build_rows, corpus_summary, emit_plot_data,
                     export_model_matrix, export_rows, filter_characters)
from .synthetic import SyntheticSpec, generate_play, generate_plays
from .text import NgramSample, TokenStream, char_3grams, normalize, word_tokens
