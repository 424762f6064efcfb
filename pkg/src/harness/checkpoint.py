"""
Binary checkpoint format

Layout (little-endian):

    header   HEADER struct below
    entity   |E| x n floats
    params   relation parameter arrays in RELATION_PARAM_NAMES order

Float width is 4 or 8 bytes. The header carries SHA-256 digests of the
entity and relation vocabularies (all zero when the store was built without
labels) so a checkpoint cannot be paired with the wrong id mapping. No
timestamps are written: equal stores give byte-identical files.
"""
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import structlog

from src.errors import CheckpointError, VocabularyError
from src.graph import Vocabulary
from src.models import FAMILIES, RELATION_PARAM_NAMES, EmbeddingStore, ModelSpec

logger = structlog.get_logger(__name__)

PathLike = Union[str, os.PathLike]

MAGIC = b'KGREPCK\x00'
FORMAT_VERSION = 1
NO_DIGEST = bytes(32)

# magic, version, family, float width, norm order, n, OTE groups,
# |E|, |R|, iteration, margin, entity digest, relation digest
HEADER = struct.Struct('<8sH8sBBIIQQQd32s32s')

_FLOAT_DTYPES = {4: np.dtype('<f4'), 8: np.dtype('<f8')}


@dataclass(frozen=True)
class CheckpointHeader:
    spec: ModelSpec
    float_width: int
    num_entities: int
    num_relations: int
    iteration: int
    entity_digest: bytes = NO_DIGEST
    relation_digest: bytes = NO_DIGEST

    def pack(self) -> bytes:
        family = self.spec.family.encode('ascii').ljust(8, b'\x00')
        return HEADER.pack(MAGIC, FORMAT_VERSION, family, self.float_width,
                           self.spec.norm_order, self.spec.entity_dim, self.spec.ote_groups,
                           self.num_entities, self.num_relations, self.iteration,
                           self.spec.margin, self.entity_digest, self.relation_digest)

    @classmethod
    def unpack(cls, raw: bytes) -> 'CheckpointHeader':
        if len(raw) < HEADER.size:
            raise CheckpointError(f"File too short for a checkpoint header ({len(raw)} bytes)")
        (magic, version, family, float_width, norm_order, entity_dim, ote_groups,
         num_entities, num_relations, iteration, margin,
         entity_digest, relation_digest) = HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise CheckpointError("Not a checkpoint file (bad magic)")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"Unsupported checkpoint version {version}")
        family = family.rstrip(b'\x00').decode('ascii', errors='replace')
        if family not in FAMILIES:
            raise CheckpointError(f"Unknown model family {family!r}")
        if float_width not in _FLOAT_DTYPES:
            raise CheckpointError(f"Unsupported float width {float_width}")
        try:
            spec = ModelSpec(family=family, entity_dim=entity_dim, margin=margin,
                             norm_order=norm_order, ote_groups=ote_groups)
        except ValueError as e:
            raise CheckpointError(f"Invalid model header: {e}") from None
        return cls(spec, float_width, num_entities, num_relations, iteration,
                   entity_digest, relation_digest)

    @property
    def dtype(self) -> np.dtype:
        return _FLOAT_DTYPES[self.float_width]

    def payload_shapes(self):
        shapes = [('entity', (self.num_entities, self.spec.entity_dim))]
        shapes.extend(self.spec.relation_shapes(self.num_relations).items())
        return shapes

    def payload_size(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.payload_shapes()) * self.float_width


def _digest(vocab: Optional[Vocabulary]) -> bytes:
    return vocab.digest() if vocab is not None else NO_DIGEST


def save_checkpoint(store: EmbeddingStore, path: PathLike,
                    entity_vocab: Optional[Vocabulary] = None,
                    relation_vocab: Optional[Vocabulary] = None) -> Path:
    """Write store to path atomically (temp file in the same directory + rename)"""
    path = Path(path)
    width = store.dtype.itemsize
    if width not in _FLOAT_DTYPES:
        raise CheckpointError(f"Cannot store {store.dtype} tables")
    store.check_finite()
    header = CheckpointHeader(store.spec, width, store.num_entities, store.num_relations,
                              store.iteration, _digest(entity_vocab), _digest(relation_vocab))
    dtype = header.dtype
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(header.pack())
            f.write(np.ascontiguousarray(store.entity, dtype=dtype).tobytes())
            for name in RELATION_PARAM_NAMES[store.spec.family]:
                f.write(np.ascontiguousarray(store.relation_params[name], dtype=dtype).tobytes())
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.info("Checkpoint saved", path=str(path), family=store.spec.family,
                iteration=store.iteration)
    return path


def read_header(path: PathLike) -> CheckpointHeader:
    with open(path, 'rb') as f:
        return CheckpointHeader.unpack(f.read(HEADER.size))


def load_checkpoint(path: PathLike, entity_vocab: Optional[Vocabulary] = None,
                    relation_vocab: Optional[Vocabulary] = None) -> EmbeddingStore:
    """Read a checkpoint; vocabularies, when given, must match the stored digests"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    raw = path.read_bytes()
    header = CheckpointHeader.unpack(raw)
    expected = HEADER.size + header.payload_size()
    if len(raw) != expected:
        raise CheckpointError(
            f"{path}: header declares {expected} bytes but the file has {len(raw)}")
    for vocab, stored, what in ((entity_vocab, header.entity_digest, 'entity'),
                                (relation_vocab, header.relation_digest, 'relation')):
        if vocab is None or stored == NO_DIGEST:
            continue
        if vocab.digest() != stored:
            raise CheckpointError(f"{path}: {what} vocabulary digest mismatch")

    arrays = {}
    offset = HEADER.size
    for name, shape in header.payload_shapes():
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(raw, dtype=header.dtype, count=count,
                                     offset=offset).reshape(shape).astype(header.dtype.newbyteorder('='))
        offset += count * header.float_width
    entity = arrays.pop('entity')
    store = EmbeddingStore(header.spec, entity, arrays, header.iteration)
    store.check_finite()
    return store


def check_vocabulary(path: PathLike, entity_vocab: Vocabulary,
                     relation_vocab: Vocabulary) -> None:
    """VocabularyError unless the checkpoint at path was written with these vocabularies"""
    header = read_header(path)
    if header.entity_digest != NO_DIGEST and header.entity_digest != entity_vocab.digest():
        raise VocabularyError(f"{path}: entity vocabulary does not match the checkpoint")
    if header.relation_digest != NO_DIGEST and header.relation_digest != relation_vocab.digest():
        raise VocabularyError(f"{path}: relation vocabulary does not match the checkpoint")
