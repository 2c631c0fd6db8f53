import numpy as np


class EvalReport:
    """CMC curve, mAP and the number of queries that had a valid positive"""

    def __init__(self, cmc, mean_ap, n_valid_queries):
        self.cmc = np.asarray(cmc, dtype=np.float64)
        self.map = float(mean_ap)
        self.n_valid_queries = int(n_valid_queries)

    def rank(self, r):
        """Rank-r accuracy, r counted from 1"""
        return float(self.cmc[min(r, len(self.cmc)) - 1])

    def to_dict(self):
        """Convert report to dictionary"""
        return {
            "cmc": self.cmc.tolist(),
            "map": self.map,
            "n_valid_queries": self.n_valid_queries,
            "rank1": self.rank(1),
            "rank5": self.rank(5),
            "rank10": self.rank(10)
        }

    def to_lines(self):
        """key=value text rendering"""
        lines = [
            f"map={self.map:.6f}",
            f"n_valid_queries={self.n_valid_queries}"
        ]
        lines.extend(f"rank{r}={value:.6f}" for r, value in enumerate(self.cmc, start=1))
        return "\n".join(lines) + "\n"

    def __eq__(self, other):
        return (
            isinstance(other, EvalReport)
            and np.array_equal(self.cmc, other.cmc)
            and self.map == other.map
            and self.n_valid_queries == other.n_valid_queries
        )

    def __repr__(self):
        return f"EvalReport(rank1={self.rank(1):.4f}, map={self.map:.4f}, n={self.n_valid_queries})"
