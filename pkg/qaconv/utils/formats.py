"""
Binary and text artifact formats

Every binary file is a little-endian header (4-byte magic, u32 version,
format-specific fields) followed by a contiguous payload. Writers produce
the same bytes for the same object, so write -> read -> write is exact.
"""
import logging
import struct
from pathlib import Path

import numpy as np
from marshmallow import ValidationError

from qaconv.models.head import MODE_EVAL, MODE_TRAIN, HeadParams
from qaconv.models.image import ImageTensor
from qaconv.models.similarity import STAGES, SimilarityMatrix
from qaconv.models.store import GalleryStore, MetaRecord
from qaconv.utils.exceptions import FormatError
from qaconv.utils.validators import MetaRecordSchema

logger = logging.getLogger(__name__)

VERSION = 1

FEATURE_MAGIC = b'QFMP'
SCORE_MAGIC = b'QSIM'
HEAD_MAGIC = b'QHED'
IMAGE_MAGIC = b'QIMG'

FEATURE_HEADER = struct.Struct('<4sIIIII')   # magic, version, n, d, h, w
SCORE_HEADER = struct.Struct('<4sIIII')      # magic, version, stage, n_query, n_gallery
HEAD_HEADER = struct.Struct('<4sIIddI')      # magic, version, n_features, momentum, eps, mode
IMAGE_HEADER = struct.Struct('<4sIIII')      # magic, version, c, h, w

FLOAT32 = np.dtype('<f4')
FLOAT64 = np.dtype('<f8')

HEAD_MODES = (MODE_TRAIN, MODE_EVAL)


def _unpack_header(header, blob, magic, kind):
    if len(blob) < header.size:
        raise FormatError(f"{kind} is truncated: {len(blob)} bytes, header needs {header.size}")
    fields = header.unpack_from(blob)
    if fields[0] != magic:
        raise FormatError(f"Bad {kind} magic {fields[0]!r}, expected {magic!r}")
    if fields[1] != VERSION:
        raise FormatError(f"Unsupported {kind} version {fields[1]}")
    return fields[2:]


def _payload(blob, offset, dtype, count, kind):
    expected = offset + count * dtype.itemsize
    if len(blob) != expected:
        raise FormatError(f"{kind} payload holds {len(blob) - offset} bytes, header implies {expected - offset}")
    return np.frombuffer(blob, dtype=dtype, count=count, offset=offset)


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"Cannot read {path}: {e.strerror}")


def _write_bytes(path, blob):
    Path(path).write_bytes(blob)
    logger.info(f"Wrote {len(blob)} bytes to {path}")


# Feature maps

def encode_features(features):
    """[n, d, h, w] float array -> FeatureMapFile bytes"""
    features = np.asarray(features)
    if features.ndim != 4:
        raise FormatError(f"Feature array must be [n, d, h, w], got shape {features.shape}")
    header = FEATURE_HEADER.pack(FEATURE_MAGIC, VERSION, *features.shape)
    return header + np.ascontiguousarray(features, dtype=FLOAT32).tobytes()


def decode_features(blob):
    n, d, h, w = _unpack_header(FEATURE_HEADER, blob, FEATURE_MAGIC, "feature file")
    data = _payload(blob, FEATURE_HEADER.size, FLOAT32, n * d * h * w, "feature file")
    return data.reshape(n, d, h, w).astype(np.float32)


def write_features(path, features):
    _write_bytes(path, encode_features(features))


def read_features(path):
    features = decode_features(_read_bytes(path))
    logger.info(f"Read {features.shape[0]} feature maps of profile {features.shape[1:]} from {path}")
    return features


# Score matrices

def encode_scores(matrix):
    header = SCORE_HEADER.pack(SCORE_MAGIC, VERSION, STAGES.index(matrix.stage), matrix.n_query, matrix.n_gallery)
    return header + matrix.scores.astype(FLOAT32).tobytes()


def decode_scores(blob):
    stage, n_query, n_gallery = _unpack_header(SCORE_HEADER, blob, SCORE_MAGIC, "score file")
    if stage >= len(STAGES):
        raise FormatError(f"Unknown stage code {stage} in score file")
    data = _payload(blob, SCORE_HEADER.size, FLOAT32, n_query * n_gallery, "score file")
    return SimilarityMatrix(data.reshape(n_query, n_gallery), STAGES[stage])


def write_scores(path, matrix):
    _write_bytes(path, encode_scores(matrix))


def read_scores(path):
    matrix = decode_scores(_read_bytes(path))
    logger.info(f"Read {matrix!r} from {path}")
    return matrix


# Head parameters

def encode_head(params):
    header = HEAD_HEADER.pack(
        HEAD_MAGIC, VERSION, params.n_features, params.momentum, params.eps, HEAD_MODES.index(params.mode)
    )
    payload = np.concatenate([getattr(params, name) for name in HeadParams.FIELDS]).astype(FLOAT64)
    return header + payload.tobytes()


def _head_sizes(n_features):
    return [1 if name == 'fc_bias' or name.startswith('bn2') else n_features for name in HeadParams.FIELDS]


def decode_head(blob):
    n_features, momentum, eps, mode = _unpack_header(HEAD_HEADER, blob, HEAD_MAGIC, "head file")
    if mode >= len(HEAD_MODES):
        raise FormatError(f"Unknown head mode code {mode}")
    sizes = _head_sizes(n_features)
    values = _payload(blob, HEAD_HEADER.size, FLOAT64, sum(sizes), "head file")
    data = dict(zip(HeadParams.FIELDS, np.split(values, np.cumsum(sizes)[:-1])))
    data.update(momentum=momentum, eps=eps, mode=HEAD_MODES[mode])
    return HeadParams.from_dict(data)


def write_head(path, params):
    _write_bytes(path, encode_head(params))


def read_head(path):
    params = decode_head(_read_bytes(path))
    logger.info(f"Read head with {params.n_features} features ({params.mode} mode) from {path}")
    return params


# Images

def encode_image(img):
    header = IMAGE_HEADER.pack(IMAGE_MAGIC, VERSION, img.channels, img.height, img.width)
    return header + img.data.astype(FLOAT32).tobytes()


def decode_image(blob):
    c, h, w = _unpack_header(IMAGE_HEADER, blob, IMAGE_MAGIC, "image file")
    data = _payload(blob, IMAGE_HEADER.size, FLOAT32, c * h * w, "image file")
    return ImageTensor(data.reshape(c, h, w))


def write_image(path, img):
    _write_bytes(path, encode_image(img))


def read_image(path):
    return decode_image(_read_bytes(path))


# Metadata

def parse_metadata(text, source='<metadata>'):
    """
    Parse id,camera[,frame,fps] lines into MetaRecords

    Blank lines and # comments are skipped.
    """
    schema = MetaRecordSchema()
    records = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        parts = [part.strip() for part in line.split(',')]
        if len(parts) not in (2, 4):
            raise FormatError(f"{source}:{number}: expected id,camera[,frame,fps], got '{line}'")
        raw = dict(zip(('id', 'camera', 'frame', 'fps'), parts))
        try:
            data = schema.load(raw)
        except ValidationError as e:
            raise FormatError(f"{source}:{number}: invalid record", details=e.messages)
        records.append(MetaRecord.from_dict(data))
    return records


def format_metadata(records):
    lines = []
    for record in records:
        if record.frame is None:
            lines.append(f"{record.identity},{record.camera}\n")
        else:
            lines.append(f"{record.identity},{record.camera},{record.frame},{record.fps!r}\n")
    return "".join(lines)


def read_metadata(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise FormatError(f"Cannot read {path}: {e.strerror}")
    return parse_metadata(text, source=str(path))


def write_metadata(path, records):
    Path(path).write_text(format_metadata(records))
    logger.info(f"Wrote {len(records)} metadata records to {path}")


def load_store(features_path, metadata_path=None):
    """GalleryStore from a feature file and an optional metadata file"""
    features = read_features(features_path)
    records = read_metadata(metadata_path) if metadata_path else None
    if records is not None and len(records) != features.shape[0]:
        raise FormatError(
            f"{metadata_path} has {len(records)} records but {features_path} has {features.shape[0]} feature maps"
        )
    return GalleryStore(features, records)


def save_store(store, features_path, metadata_path=None):
    write_features(features_path, store.features)
    if metadata_path:
        write_metadata(metadata_path, store.records)


# Reports and tables

def write_trace(path, result):
    Path(path).write_text(result.trace_lines())
    logger.info(f"Wrote {len(result.trace)} epoch losses to {path}")


def read_trace(path):
    trace = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            epoch, loss = line.split(',')
            trace.append((int(epoch), float(loss)))
    return trace


def write_report(path, report):
    Path(path).write_text(report.to_lines())
    logger.info(f"Wrote evaluation report to {path}")


SWEEP_COLUMNS = ('param', 'value', 'rank1', 'rank5', 'rank10', 'map')


def format_sweep_table(rows):
    """Comma-separated table, one line per (param, value, report) row"""
    lines = [",".join(SWEEP_COLUMNS)]
    for param, value, report in rows:
        lines.append(f"{param},{value},{report.rank(1):.6f},{report.rank(5):.6f},"
                     f"{report.rank(10):.6f},{report.map:.6f}")
    return "\n".join(lines) + "\n"


def write_sweep_table(path, rows):
    Path(path).write_text(format_sweep_table(rows))
    logger.info(f"Wrote {len(rows)} sweep rows to {path}")
