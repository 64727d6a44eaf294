"""Hypergraph-based multimodal connectivity generation with a random-walk adversary."""

from .construct import DhcConfig, OhghConfig, dhc_construct, ohgh_consensus, ohgh_exhaustive
from .dataio import SubjectRecord, SynthConfig, load_manifest, save_manifest, synth_cohort
from .evaluate import classify_eval, classify_repeated, region_ranking
from .hgcore import Hypergraph, hypergraph_similarity, incidence_matrix, optimal_assignment
from .ihen import GeneratorConfig, generator_backward, generator_forward, init_generator
from .pipeline import PipelineConfig, fit, generate
from .report import emit_report
from .walk import endpoint_distributions_exact, sample_walks, transition_matrix

__version__ = "0.1.0"
