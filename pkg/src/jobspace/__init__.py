"""jobspace: job/skill embedding training, location-aware posting vectors,
nearest-neighbor search, and recommendation metrics."""

__version__ = "0.1.0"

from .corpus import (
    CareerSequence,
    CuratedSkillTable,
    JobPosting,
    RecordKind,
    SynthConfig,
    Vocabulary,
    fallback_skills,
    generate_synthetic,
    parse_postings,
)
from .compose import (
    JobVector,
    Lexicon,
    VectorSet,
    append_location,
    compose_job_vector,
    retrofit_iterative,
    vectorize_corpus,
    vectorize_posting,
)
from .errors import DataError, JobspaceError, NumericalError, UnresolvableSkillsError, UsageError
from .evaluation import (
    EvalReport,
    RecommendationSet,
    distance_stats,
    evaluate_model,
    in_range_count,
    title_coverage,
    title_match_rate,
)
from .geo import EARTH_RADIUS_MILES, geo_to_unit_vector, haversine_miles
from .graphs import (
    GraphKind,
    RelationGraph,
    Triplet,
    build_job_job,
    build_job_skill,
    build_skill_skill,
    sample_triplets,
)
from .index import FlatIndex, IvfPqIndex, IvfPqParams, kmeans, load_index, save_index
from .training import (
    EmbeddingSpace,
    LossReport,
    TrainConfig,
    affinity,
    init_embeddings,
    joint_loss,
    ranking_accuracy,
    sgd_step,
    train,
    triplet_loss,
)

__all__ = [
    "CareerSequence",
    "CuratedSkillTable",
    "DataError",
    "EARTH_RADIUS_MILES",
    "EmbeddingSpace",
    "EvalReport",
    "FlatIndex",
    "GraphKind",
    "IvfPqIndex",
    "IvfPqParams",
    "JobPosting",
    "JobVector",
    "JobspaceError",
    "Lexicon",
    "LossReport",
    "NumericalError",
    "RecommendationSet",
    "RecordKind",
    "RelationGraph",
    "SynthConfig",
    "TrainConfig",
    "Triplet",
    "UnresolvableSkillsError",
    "UsageError",
    "VectorSet",
    "Vocabulary",
    "affinity",
    "append_location",
    "build_job_job",
    "build_job_skill",
    "build_skill_skill",
    "compose_job_vector",
    "distance_stats",
    "evaluate_model",
    "fallback_skills",
    "generate_synthetic",
    "geo_to_unit_vector",
    "haversine_miles",
    "in_range_count",
    "init_embeddings",
    "joint_loss",
    "kmeans",
    "load_index",
    "parse_postings",
    "ranking_accuracy",
    "retrofit_iterative",
    "sample_triplets",
    "save_index",
    "sgd_step",
    "title_coverage",
    "title_match_rate",
    "train",
    "triplet_loss",
    "vectorize_corpus",
    "vectorize_posting",
]
