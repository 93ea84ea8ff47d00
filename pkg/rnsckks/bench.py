"""
Benchmark Harness
=================
Design-space sweeps for the NTT and BConv kernels and latency measurements of
single mechanisms.

Every swept configuration is first checked bit-exact against the default
configuration on the same input; only then is it timed. Invalid grid points
(bad factorizations, tilings that do not divide N, ...) become skipped rows; a
configuration whose output differs becomes a failed row and is never timed.
"""

import csv
import io
import itertools
import json
import logging
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import psutil

from . import __version__
from .bconv import BConvTable, BConvTiling, bconv_part2
from .errors import CkksError, OutputMismatchError
from .instrument import counters
from .ntt import NttParams, NttPlan, intt_inverse, ntt_forward
from .parallel import worker_count
from .poly import Domain, Polynomial
from .rns import generate_basis

logger = logging.getLogger(__name__)

SWEEP_OPERATIONS = ('ntt', 'bconv')
MECHANISMS = ('ntt', 'intt', 'bconv', 'modswitch', 'hadd', 'padd', 'pmult', 'hmult', 'hrot',
              'rescale')
REPORT_COLUMNS = ('op', 'level', 'params', 'valid', 'status', 'reason', 'median_ns', 'min_ns',
                  'p99_ns', 'counters')

STATUS_OK = 'ok'
STATUS_SKIPPED = 'skipped'
STATUS_FAILED = 'failed'


def default_ntt_grid():
    """(n1, n2) in {(64,1024), (128,512), (256,256)} x g in {8, 16}"""
    return {'n1,n2': [[64, 1024], [128, 512], [256, 256]], 'g': [8, 16]}


def default_bconv_grid():
    """Tilings with l_b * n_b = 256"""
    return {'l_b,n_b': [[1, 256], [2, 128], [4, 64]], 'n_t': [1, 2, 4], 'l_t': [1, 3, 4]}


@dataclass
class SweepSpec:
    """One sweep: operation, parameter grid, levels and timing policy"""

    op: str
    grid: dict = field(default_factory=dict)
    levels: tuple = (54, 28)
    reps: int = 10
    warmup: int = 2
    n: int = 1 << 16
    alpha: int = 14
    delta_bits: int = 48
    seed: int = 0

    @classmethod
    def from_json(cls, source):
        """Spec from a JSON file path or an already parsed dict"""
        if isinstance(source, dict):
            data = dict(source)
        else:
            with open(source, 'r') as f:
                data = json.load(f)
        if 'levels' in data:
            data['levels'] = tuple(data['levels'])
        return cls(**data)

    @classmethod
    def default(cls, op, **overrides):
        grids = {'ntt': default_ntt_grid, 'bconv': default_bconv_grid}
        if op not in grids:
            raise ValueError(f"No default grid for '{op}'")
        return cls(op=op, grid=grids[op](), **overrides)

    def points(self):
        """Parameter dicts in deterministic grid order (keys as given, values as listed)"""
        if not self.grid:
            return []
        axes = []
        for key, values in self.grid.items():
            names = key.split(',')
            axes.append([dict(zip(names, v if len(names) > 1 else [v])) for v in values])
        points = []
        for combo in itertools.product(*axes):
            merged = {}
            for part in combo:
                merged.update(part)
            points.append(merged)
        return points


@dataclass
class Report:
    """Rows plus a machine metadata header"""

    op: str
    metadata: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    @property
    def skipped(self):
        return [row for row in self.rows if row['status'] == STATUS_SKIPPED]

    @property
    def failed(self):
        """Rows whose output did not match the default configuration"""
        return [row for row in self.rows if row['status'] == STATUS_FAILED]

    def to_csv(self):
        out = io.StringIO()
        for key, value in self.metadata.items():
            out.write(f"# {key}: {value}\n")
        writer = csv.DictWriter(out, fieldnames=REPORT_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in self.rows:
            flat = dict(row)
            flat['params'] = json.dumps(row['params'], sort_keys=True)
            flat['counters'] = json.dumps(row.get('counters', {}), sort_keys=True)
            writer.writerow({k: flat.get(k) for k in REPORT_COLUMNS})
        return out.getvalue()

    def to_json(self):
        return json.dumps({'op': self.op, 'metadata': self.metadata, 'rows': self.rows}, indent=2)

    def write(self, path, fmt='csv'):
        text = self.to_json() if fmt == 'json' else self.to_csv()
        with open(path, 'w') as f:
            f.write(text)
        logger.info(f"Report written to {path} ({len(self.rows)} rows)")


def machine_metadata(basis=None):
    memory = psutil.virtual_memory()
    return {
        'library_version': __version__,
        'numpy_version': np.__version__,
        'python': platform.python_version(),
        'host': platform.node(),
        'logical_cores': psutil.cpu_count(logical=True),
        'physical_cores': psutil.cpu_count(logical=False),
        'total_memory_bytes': memory.total,
        'basis_hash': basis.basis_hash if basis is not None else '',
    }


def latency_stats(samples):
    """median/min/p99 in nanoseconds; all None without samples"""
    if not samples:
        return {'median_ns': None, 'min_ns': None, 'p99_ns': None}
    data = np.asarray(samples, dtype=np.float64)
    return {'median_ns': int(np.median(data)), 'min_ns': int(data.min()),
            'p99_ns': int(np.percentile(data, 99))}


def time_call(fn, reps, warmup):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        start = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - start)
    return latency_stats(samples)


def _row(op, level, params, status=STATUS_OK, reason='', stats=None, delta=None):
    row = {'op': op, 'level': level, 'params': params, 'valid': status == STATUS_OK,
           'status': status, 'reason': reason}
    row.update(stats or latency_stats([]))
    row['counters'] = {k: v for k, v in (delta or {}).items() if v}
    return row


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _ntt_params(point, n):
    base = NttParams.default(n)
    n1 = point.get('n1', base.n1)
    n2 = point.get('n2', n // n1)
    g = point.get('g')
    return NttParams(n1=n1, n2=n2,
                     g1=point.get('g1', g if g is not None else min(base.g1, n1)),
                     g2=point.get('g2', g if g is not None else min(base.g2, n2)),
                     b_k1=point.get('b_k1', min(base.b_k1, n2)),
                     ot_enabled=bool(point.get('ot_enabled', base.ot_enabled)),
                     lsb_size=point.get('lsb_size', base.lsb_size))


def _ntt_runner(root, level, rng):
    basis = root.q_view(level)
    q = basis.limb_constants.q
    rows = rng.integers(0, q, size=(len(basis), basis.n), dtype=np.int64)
    coeff = Polynomial.from_wide(rows, basis, Domain.COEFFICIENT, False, canonical=True)
    reference_plan = NttPlan(root, NttParams.default(root.n))
    ref_eval = ntt_forward(coeff, reference_plan)
    ref_back = intt_inverse(ref_eval, reference_plan)

    def prepare(point):
        plan = NttPlan(root, _ntt_params(point, root.n))
        evaluated = ntt_forward(coeff, plan)
        back = intt_inverse(evaluated, plan)
        if not (np.array_equal(evaluated.limbs, ref_eval.limbs)
                and np.array_equal(back.limbs, ref_back.limbs)):
            raise OutputMismatchError("output differs from the default plan")
        return lambda: ntt_forward(coeff, plan)
    return prepare


def _bconv_runner(root, level, rng):
    source = root.p_view()
    target = root.q_view(level)
    table = BConvTable.build(source, target)
    rows = rng.integers(0, source.limb_constants.q, size=(len(source), source.n), dtype=np.int64)
    t = Polynomial.from_wide(rows, source, Domain.COEFFICIENT, False, canonical=True)
    reference = bconv_part2(t, table, BConvTiling.default_for(root.n))

    def prepare(point):
        base = BConvTiling.default_for(root.n)
        tiling = BConvTiling(point.get('l_t', base.l_t), point.get('n_t', base.n_t),
                             point.get('l_b', base.l_b), point.get('n_b', base.n_b),
                             point.get('v', base.v))
        out = bconv_part2(t, table, tiling)
        if not np.array_equal(out.limbs, reference.limbs):
            raise OutputMismatchError("output differs from the default tiling")
        return lambda: bconv_part2(t, table, tiling)
    return prepare


_RUNNERS = {'ntt': _ntt_runner, 'bconv': _bconv_runner}


def run_sweep(spec):
    """One report row per (level, grid point), validated before timing"""
    if spec.op not in _RUNNERS:
        raise ValueError(f"Unknown sweep operation '{spec.op}' "
                         f"(expected one of {SWEEP_OPERATIONS})")
    points = spec.points()
    report = Report(spec.op)
    if not points:
        report.metadata = machine_metadata()
        return report

    root = generate_basis(spec.n, max(spec.levels), spec.alpha, spec.delta_bits)
    report.metadata = machine_metadata(root)
    rng = np.random.default_rng(spec.seed)
    for level in spec.levels:
        prepare = _RUNNERS[spec.op](root, level, rng)
        for point in points:
            try:
                fn = prepare(point)
            except AssertionError as e:
                logger.error(f"{spec.op} {point} at L={level} is incorrect: {e}")
                report.rows.append(_row(spec.op, level, point, STATUS_FAILED, str(e)))
                continue
            except CkksError as e:
                logger.warning(f"Skipping {spec.op} {point} at L={level}: {e}")
                report.rows.append(_row(spec.op, level, point, STATUS_SKIPPED, str(e)))
                continue
            with counters.counting() as delta:
                fn()
            stats = time_call(fn, spec.reps, spec.warmup)
            report.rows.append(_row(spec.op, level, point, STATUS_OK, '', stats, delta))
            logger.debug(f"{spec.op} {point} L={level}: {stats['median_ns']} ns")
    logger.info(f"Sweep '{spec.op}' finished: {len(report.rows)} rows, "
                f"{len(report.skipped)} skipped, {len(report.failed)} failed")
    return report


# ---------------------------------------------------------------------------
# Mechanisms
# ---------------------------------------------------------------------------

def _mechanism_call(mechanism, context, level, rng):
    """Zero-argument callable running one mechanism on prepared inputs"""
    from .ckks import Encoder, Evaluator, encrypt, generate_keyset, keygen
    from .bconv import mod_switch

    encoder = Encoder(context)
    basis = context.level_basis(level)
    if mechanism in ('ntt', 'intt'):
        rows = rng.integers(0, basis.limb_constants.q, size=(len(basis), basis.n), dtype=np.int64)
        coeff = Polynomial.from_wide(rows, basis, Domain.COEFFICIENT, False, canonical=True)
        if mechanism == 'ntt':
            return lambda: ntt_forward(coeff, context.plan)
        evaluated = ntt_forward(coeff, context.plan)
        return lambda: intt_inverse(evaluated, context.plan)
    if mechanism == 'bconv':
        source, target = context.p_basis, basis
        table = context.table(source, target)
        rows = rng.integers(0, source.limb_constants.q, size=(len(source), basis.n), dtype=np.int64)
        t = Polynomial.from_wide(rows, source, Domain.COEFFICIENT, False, canonical=True)
        return lambda: bconv_part2(t, table, context.tiling)

    sk = keygen(context, rng=rng)
    steps = (1,) if mechanism == 'hrot' else ()
    keys = generate_keyset(context, sk, steps=steps, relin=mechanism == 'hmult', rng=rng)
    evaluator = Evaluator(context, keys)
    slots = context.slots
    u = rng.uniform(-1, 1, slots) + 1j * rng.uniform(-1, 1, slots)
    pt = encoder.encode(u, level=level)
    ct = encrypt(context, pt, sk, rng)
    if mechanism == 'modswitch':
        state_digit = context.digit_bases(level)[0]
        target = context.modup_targets(level)[0]
        table = context.table(state_digit, target)
        src = ct.a.restrict(state_digit)
        return lambda: mod_switch(src, target, context.plan, table, context.tiling)
    if mechanism == 'hadd':
        return lambda: evaluator.hadd(ct, ct)
    if mechanism == 'padd':
        return lambda: evaluator.padd(ct, pt)
    if mechanism == 'pmult':
        return lambda: evaluator.pmult(ct, pt)
    if mechanism == 'hmult':
        return lambda: evaluator.hmult(ct, ct)
    if mechanism == 'hrot':
        return lambda: evaluator.hrot(ct, 1)
    if mechanism == 'rescale':
        product = evaluator.pmult(ct, pt)
        return lambda: evaluator.rescale(product)
    raise ValueError(f"Unknown mechanism '{mechanism}' (expected one of {MECHANISMS})")


def run_mechanism_bench(mechanism, level=None, reps=10, warmup=1, context=None, n=1 << 16,
                        l=54, alpha=14, delta_bits=48, seed=0):
    """Latency statistics plus the counter profile of one invocation

    Parameter-build failures (including running out of memory) are reported in the
    'reason' field of an invalid row instead of raised.
    """
    from .ckks import CkksContext

    if mechanism not in MECHANISMS:
        raise ValueError(f"Unknown mechanism '{mechanism}' (expected one of {MECHANISMS})")
    rng = np.random.default_rng(seed)
    params = {'mechanism': mechanism, 'reps': reps, 'warmup': warmup}
    try:
        if context is None:
            context = CkksContext.create(n, l, alpha, delta_bits, seed=seed)
        level = context.max_level if level is None else level
        params['level'] = level
        fn = _mechanism_call(mechanism, context, level, rng)
    except (MemoryError, CkksError) as e:
        logger.error(f"Cannot build '{mechanism}' benchmark: {e}")
        return _row(mechanism, level, params, STATUS_SKIPPED, f"{type(e).__name__}: {e}")

    with counters.counting() as delta:
        fn()
    stats = time_call(fn, reps, max(0, warmup))
    logger.info(f"{mechanism} at level {level}: median {stats['median_ns']} ns over {reps} reps")
    return _row(mechanism, level, params, STATUS_OK, '', stats, delta)


def mechanism_report(mechanisms, **kwargs):
    """Report with one row per mechanism sharing one context"""
    from .ckks import CkksContext

    context = kwargs.pop('context', None)
    build = {k: kwargs.pop(k) for k in ('n', 'l', 'alpha', 'delta_bits') if k in kwargs}
    report = Report('mechanisms')
    try:
        if context is None:
            context = CkksContext.create(build.get('n', 1 << 16), build.get('l', 54),
                                         build.get('alpha', 14), build.get('delta_bits', 48),
                                         seed=kwargs.get('seed', 0))
    except (MemoryError, CkksError) as e:
        logger.error(f"Cannot build benchmark context: {e}")
        report.metadata = machine_metadata()
        report.rows.append(_row('context', None, build, STATUS_SKIPPED,
                                f"{type(e).__name__}: {e}"))
        return report
    report.metadata = machine_metadata(context.basis)
    report.metadata['threads'] = worker_count()
    for mechanism in mechanisms:
        report.rows.append(run_mechanism_bench(mechanism, context=context, **kwargs))
    return report
