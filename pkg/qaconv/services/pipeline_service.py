import itertools
import logging
from pathlib import Path

from qaconv.config.loader import rerank_params, tlift_params
from qaconv.models.similarity import STAGE_PROBABILITY, STAGE_RERANKED, STAGE_TLIFTED
from qaconv.models.store import check_same_profile
from qaconv.services.evaluation_service import EvaluationService
from qaconv.services.matching_service import MatchingService
from qaconv.services.rerank_service import RerankService
from qaconv.services.tlift_service import TLiftService
from qaconv.utils import formats
from qaconv.utils.exceptions import PreconditionError

logger = logging.getLogger(__name__)

# File names of the artifacts persisted by run()
QG_FILE = 'qg.qsim'
QQ_FILE = 'qq.qsim'
GG_FILE = 'gg.qsim'
RERANKED_FILE = 'reranked.qsim'
TLIFTED_FILE = 'tlifted.qsim'
REPORT_FILE = 'report.txt'

SWEEP_PARAMS = ('tau', 'sigma', 'k', 'alpha')


class PipelineResult:
    """Score matrix of every stage that ran, plus the optional report"""

    def __init__(self):
        self.stages = {}
        self.report = None

    @property
    def final(self):
        return list(self.stages.values())[-1]


class PipelineService:
    """Chains match -> rerank -> tlift -> eval and persists each stage"""

    def __init__(self, settings):
        self.settings = settings
        self.matcher = MatchingService(
            kernel_size=settings['kernel_size'],
            workers=settings['workers'],
            gallery_block=settings['gallery_block']
        )

    def match(self, queries, gallery, params):
        """Normalize both stores and score every query against every gallery entry"""
        check_same_profile(queries, gallery)
        return self.matcher.match_batch(queries.normalized(), gallery.normalized(), params)

    def rerank(self, qg, queries, gallery, params, out_dir=None):
        normalized_q, normalized_g = queries.normalized(), gallery.normalized()
        qq = self.matcher.match_within(normalized_q, params)
        gg = self.matcher.match_within(normalized_g, params)
        self._persist(out_dir, QQ_FILE, qq)
        self._persist(out_dir, GG_FILE, gg)
        return RerankService(rerank_params(self.settings)).k_reciprocal_rerank(qg, qq, gg)

    def run(self, queries, gallery, params, rerank=False, tlift=False, evaluate=True, out_dir=None):
        """
        Run the enabled stages in order, writing each intermediate matrix

        Args:
            queries, gallery: GalleryStores (metadata needed for tlift and eval)
            params: HeadParams in eval mode
            out_dir: directory for the artifacts, nothing is written when None

        Returns:
            PipelineResult
        """
        if tlift and not (queries.has_times() and gallery.has_times()):
            raise PreconditionError("Temporal lifting needs frame and fps for every query and gallery record")
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)

        result = PipelineResult()
        qg = self.match(queries, gallery, params)
        result.stages[STAGE_PROBABILITY] = qg
        self._persist(out_dir, QG_FILE, qg)

        current = qg
        if rerank:
            current = self.rerank(qg, queries, gallery, params, out_dir)
            result.stages[STAGE_RERANKED] = current
            self._persist(out_dir, RERANKED_FILE, current)
        if tlift:
            current = TLiftService(tlift_params(self.settings)).tlift_fuse(current, queries.records, gallery.records)
            result.stages[STAGE_TLIFTED] = current
            self._persist(out_dir, TLIFTED_FILE, current)
        if evaluate:
            result.report = EvaluationService(self.settings['r_max']).evaluate(
                current, queries.records, gallery.records
            )
            if out_dir is not None:
                formats.write_report(Path(out_dir) / REPORT_FILE, result.report)
        return result

    @staticmethod
    def _persist(out_dir, name, matrix):
        if out_dir is not None:
            formats.write_scores(Path(out_dir) / name, matrix)

    def sweep(self, scores, query_meta, gallery_meta, grid, product=False):
        """
        TLift + eval over a parameter grid on cached scores

        Args:
            grid: dict name -> list of values, names from SWEEP_PARAMS
            product: evaluate every combination instead of one parameter
                at a time with the others at their configured values

        Returns:
            list: (param label, value label, EvalReport) rows
        """
        unknown = set(grid) - set(SWEEP_PARAMS)
        if unknown:
            raise PreconditionError(f"Cannot sweep {', '.join(sorted(unknown))}; choose from {', '.join(SWEEP_PARAMS)}")
        base = tlift_params(self.settings)
        evaluator = EvaluationService(self.settings['r_max'])

        if product:
            names = list(grid)
            points = [dict(zip(names, values)) for values in itertools.product(*(grid[n] for n in names))]
        else:
            points = [{name: value} for name, values in grid.items() for value in values]

        rows = []
        for point in points:
            fused = TLiftService(base.replace(**point)).tlift_fuse(scores, query_meta, gallery_meta)
            report = evaluator.evaluate(fused, query_meta, gallery_meta)
            param = ";".join(point)
            value = ";".join(f"{v:g}" for v in point.values())
            logger.info(f"Sweep {param}={value}: rank1={report.rank(1):.4f} mAP={report.map:.4f}")
            rows.append((param, value, report))
        return rows
