import numpy as np
from qaconv.utils.exceptions import FormatError, PreconditionError, ProfileMismatchError

# Stage tags, in the order they are encoded in score files
STAGE_RAW = 'raw'
STAGE_PROBABILITY = 'probability'
STAGE_RERANKED = 'reranked_distance'
STAGE_TLIFTED = 'tlifted'
STAGES = (STAGE_RAW, STAGE_PROBABILITY, STAGE_RERANKED, STAGE_TLIFTED)

# Stages where a lower score means a better match
DISTANCE_STAGES = (STAGE_RERANKED,)


class SimilarityMatrix:
    """Dense query×gallery score table tagged with the stage that produced it"""

    def __init__(self, scores, stage=STAGE_PROBABILITY):
        if stage not in STAGES:
            raise FormatError(f"Unknown stage '{stage}', expected one of {', '.join(STAGES)}")
        scores = np.array(scores, dtype=np.float32, copy=True)
        if scores.ndim != 2:
            raise FormatError(f"Score matrix must be 2-D, got shape {scores.shape}")
        if stage == STAGE_PROBABILITY and not np.all((scores >= 0) & (scores <= 1)):
            raise FormatError("Probability scores must lie in [0, 1]")
        scores.flags.writeable = False
        self.scores = scores
        self.stage = stage

    @property
    def n_query(self):
        return self.scores.shape[0]

    @property
    def n_gallery(self):
        return self.scores.shape[1]

    @property
    def shape(self):
        return self.scores.shape

    @property
    def is_distance(self):
        return self.stage in DISTANCE_STAGES

    def similarity_view(self):
        """float64 scores where higher is better (distances negated)"""
        scores = self.scores.astype(np.float64)
        return -scores if self.is_distance else scores

    def to_distance(self):
        """d = 1 - p for probability matrices; distances pass through"""
        if self.is_distance:
            return self.scores
        if self.stage != STAGE_PROBABILITY:
            raise PreconditionError(f"Cannot convert a '{self.stage}' matrix to distances")
        return np.float32(1.0) - self.scores

    def check_dims(self, n_query, n_gallery):
        if self.shape != (n_query, n_gallery):
            raise ProfileMismatchError(
                f"Score matrix is {self.n_query}×{self.n_gallery}, expected {n_query}×{n_gallery}"
            )

    def to_dict(self):
        """Convert matrix to dictionary"""
        return {
            "stage": self.stage,
            "n_query": self.n_query,
            "n_gallery": self.n_gallery,
            "scores": self.scores.tolist()
        }

    def __eq__(self, other):
        return (
            isinstance(other, SimilarityMatrix)
            and self.stage == other.stage
            and np.array_equal(self.scores, other.scores)
        )

    def __repr__(self):
        return f"SimilarityMatrix({self.n_query}×{self.n_gallery}, stage={self.stage})"


class Correspondence:
    """One local match between a query cell and a gallery cell"""

    def __init__(self, query_location, gallery_location, score, direction='query'):
        self.query_location = tuple(query_location)
        self.gallery_location = tuple(gallery_location)
        self.score = float(score)
        self.direction = direction  # side whose max pooling produced it

    def key(self):
        return self.query_location, self.gallery_location

    def to_dict(self):
        return {
            "query": list(self.query_location),
            "gallery": list(self.gallery_location),
            "score": self.score,
            "direction": self.direction
        }


class CorrespondenceSet:
    """Reliable local correspondences of one matched pair plus its probability"""

    def __init__(self, correspondences, probability, threshold):
        self.correspondences = list(correspondences)
        self.probability = float(probability)
        self.threshold = float(threshold)

    def __len__(self):
        return len(self.correspondences)

    def __iter__(self):
        return iter(self.correspondences)

    def to_dict(self):
        """Convert correspondence set to dictionary"""
        return {
            "probability": self.probability,
            "threshold": self.threshold,
            "correspondences": [c.to_dict() for c in self.correspondences]
        }
