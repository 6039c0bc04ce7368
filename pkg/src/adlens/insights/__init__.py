from .phrases import PhraseCandidate, Tagger, extract_phrases
from .ranking import RankEntry, RankTable, phrase_extractor, rank_scores, recommend_text, word_extractor
from .patches import Patch, attach_clusters, cluster_patches, extract_patches, rank_clusters, recommend_patches, square_iou
from .export import embed_patches, export_recommendations, load_recommendations, patch_asset_id

__all__ = [
    "Patch",
    "PhraseCandidate",
    "RankEntry",
    "RankTable",
    "Tagger",
    "attach_clusters",
    "cluster_patches",
    "embed_patches",
    "export_recommendations",
    "extract_patches",
    "extract_phrases",
    "load_recommendations",
    "patch_asset_id",
    "phrase_extractor",
    "rank_clusters",
    "rank_scores",
    "recommend_patches",
    "recommend_text",
    "square_iou",
    "word_extractor",
]
