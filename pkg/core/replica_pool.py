"""
Replica Pool - esecuzione parallela delle repliche Monte Carlo

Concetti:
  • replica_stream: flusso RNG dedicato a una replica (Philox counter-based)
  • ReplicaChunk: blocco contiguo di repliche [start, stop)
  • ReplicaPool: ThreadPoolExecutor sui blocchi, risultati in ordine di blocco
  • RunningStats: media/varianza a un passaggio, fusione associativa

Il partizionamento in blocchi dipende solo da (replicas, chunk_size), mai dal
numero di thread: gli output concatenati in ordine di blocco sono quindi
identici bit a bit con 1, 4 o 8 worker.

Esempio:
    pool = ReplicaPool(max_workers=4, chunk_size=500)
    outputs = pool.map(lambda chunk: simulate(chunk.start, chunk.stop), 10_000)
    values = np.concatenate(outputs)
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


# ─── Flussi RNG ─────────────────────────────────────────────────────────

# Namespace dei flussi: lo stesso (seed, replica) non condivide mai numeri
# tra traiettorie e ricampionamenti bootstrap.
PATH_NAMESPACE = 0
BOOTSTRAP_NAMESPACE = 1

RNG_SCHEME = {
    "bit_generator": "Philox4x64-10",
    "key": "SeedSequence(seed, spawn_key=(namespace,)).generate_state(2, uint64)",
    "counter": "[0, 0, 0, replica]",
    "namespaces": {"paths": PATH_NAMESPACE, "bootstrap": BOOTSTRAP_NAMESPACE},
    "draw_order": "normali della traiettoria, poi eta",
}


def replica_stream(seed: int, replica: int, namespace: int = PATH_NAMESPACE) -> np.random.Generator:
    """Generatore dedicato alla replica `replica` del seed master.

    La chiave Philox deriva dal seed (e dal namespace); l'indice di replica
    occupa la parola alta del contatore a 256 bit, quindi i flussi sono
    disgiunti per ogni uso realistico.
    """
    if replica < 0:
        raise ValueError(f"Indice di replica negativo: {replica}")
    key = np.random.SeedSequence(int(seed), spawn_key=(int(namespace),)).generate_state(2, np.uint64)
    counter = np.array([0, 0, 0, int(replica)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


# ─── Statistiche in streaming ───────────────────────────────────────────

@dataclass
class RunningStats:
    """Media e varianza a un passaggio (Welford), fondibili (Chan et al.)."""
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push_many(self, values) -> "RunningStats":
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return self
        other = RunningStats(
            count=int(values.size),
            mean=float(values.mean()),
            m2=float(((values - values.mean()) ** 2).sum()),
        )
        return self.merge(other)

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return self
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / total
        self.m2 += other.m2 + delta * delta * self.count * other.count / total
        self.count = total
        return self

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else 0.0

    def to_dict(self) -> Dict[str, float]:
        return {"count": self.count, "mean": self.mean, "std_error": self.std_error}


def mean_and_se(values) -> Tuple[float, float]:
    """(media, errore standard) di un vettore di repliche."""
    stats = RunningStats().push_many(values)
    return stats.mean, stats.std_error


# ─── Chunk ──────────────────────────────────────────────────────────────

class ChunkStatus(Enum):
    SUCCESS = "success"
    FAILED = "failed"
    SKIPPED = "skipped"


@dataclass(frozen=True)
class ReplicaChunk:
    """Blocco contiguo di repliche [start, stop)."""
    index: int
    start: int
    stop: int

    @property
    def size(self) -> int:
        return self.stop - self.start


@dataclass
class ChunkResult:
    """Esito di un blocco."""
    chunk: ReplicaChunk
    status: ChunkStatus
    output: Any = None
    error: Optional[str] = None
    duration_ms: float = 0.0
    exception: Optional[BaseException] = None


class PoolError(Exception):
    """Errore durante l'esecuzione dei blocchi di repliche."""


def split_replicas(replicas: int, chunk_size: int) -> List[ReplicaChunk]:
    """Partiziona [0, replicas) in blocchi di dimensione fissa."""
    if replicas < 1:
        raise ValueError(f"Numero di repliche non valido: {replicas}")
    if chunk_size < 1:
        raise ValueError(f"Dimensione blocco non valida: {chunk_size}")
    return [
        ReplicaChunk(index=i, start=start, stop=min(start + chunk_size, replicas))
        for i, start in enumerate(range(0, replicas, chunk_size))
    ]


# ─── Pool ───────────────────────────────────────────────────────────────

class ReplicaPool:
    """Esegue una funzione su tutti i blocchi di repliche in parallelo.

    Args:
        max_workers: Numero di thread (le routine numpy rilasciano il GIL)
        chunk_size:  Repliche per blocco; fissa il partizionamento
        deadline:    Istante (time.monotonic) oltre il quale i blocchi non
                     ancora avviati vengono saltati (None = nessun limite)
    """

    def __init__(self, max_workers: int = 4, chunk_size: int = 500,
                 deadline: Optional[float] = None):
        if max_workers < 1:
            raise ValueError(f"max_workers deve essere ≥ 1, ricevuto {max_workers}")
        self.max_workers = max_workers
        self.chunk_size = chunk_size
        self.deadline = deadline
        self.truncated = False

    def run(self, fn: Callable[[ReplicaChunk], Any], replicas: int) -> List[ChunkResult]:
        """Esegue `fn` su ogni blocco. Restituisce i ChunkResult in ordine di blocco."""
        chunks = split_replicas(replicas, self.chunk_size)
        t_start = time.perf_counter()
        logger.debug("ReplicaPool: %d repliche in %d blocchi (%d thread)",
                     replicas, len(chunks), self.max_workers)

        if self.max_workers == 1 or len(chunks) == 1:
            results = [self._run_chunk(fn, c) for c in chunks]
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                futures = [pool.submit(self._run_chunk, fn, c) for c in chunks]
                results = [f.result() for f in futures]

        skipped = sum(1 for r in results if r.status == ChunkStatus.SKIPPED)
        if skipped:
            self.truncated = True
            logger.warning("ReplicaPool: budget esaurito, %d/%d blocchi saltati",
                           skipped, len(chunks))
        logger.debug("ReplicaPool: completato in %.0fms",
                     (time.perf_counter() - t_start) * 1000)
        return results

    def map(self, fn: Callable[[ReplicaChunk], Any], replicas: int) -> List[Any]:
        """Come run(), ma restituisce solo gli output dei blocchi completati.

        Un blocco fallito interrompe il calcolo con PoolError; i blocchi saltati
        per budget vengono omessi (il pool resta marcato `truncated`).
        """
        outputs = []
        for r in self.run(fn, replicas):
            if r.status == ChunkStatus.FAILED:
                raise PoolError(
                    f"Blocco {r.chunk.index} (repliche {r.chunk.start}-{r.chunk.stop}) fallito: {r.error}"
                ) from r.exception
            if r.status == ChunkStatus.SUCCESS:
                outputs.append(r.output)
        if not outputs:
            raise PoolError("Nessun blocco completato entro il budget")
        return outputs

    def _run_chunk(self, fn: Callable[[ReplicaChunk], Any], chunk: ReplicaChunk) -> ChunkResult:
        if self.deadline is not None and time.monotonic() > self.deadline:
            return ChunkResult(chunk=chunk, status=ChunkStatus.SKIPPED, error="Budget esaurito")
        t0 = time.perf_counter()
        try:
            output = fn(chunk)
        except Exception as e:
            logger.warning("Blocco %d: errore: %s", chunk.index, e)
            return ChunkResult(chunk=chunk, status=ChunkStatus.FAILED, error=str(e), exception=e,
                               duration_ms=(time.perf_counter() - t0) * 1000)
        return ChunkResult(chunk=chunk, status=ChunkStatus.SUCCESS, output=output,
                           duration_ms=(time.perf_counter() - t0) * 1000)


def merge_block_stats(blocks: List[Dict[str, RunningStats]]) -> Dict[str, RunningStats]:
    """Fonde, in ordine di blocco, i dizionari nome → RunningStats dei blocchi."""
    merged: Dict[str, RunningStats] = {}
    for block in blocks:
        for name, stats in block.items():
            merged.setdefault(name, RunningStats()).merge(stats)
    return merged
