"""
Results Store
=============
SQLite history of benchmark reports: one run per report, one measurement per row.
"""

import json
import logging
import sqlite3
import threading
from datetime import datetime, timezone

from .bench import STATUS_OK

logger = logging.getLogger(__name__)


class ResultsStore:
    """SQLite store for sweep and mechanism reports"""

    def __init__(self, db_path='ckks_bench.db'):
        self.db_path = db_path
        self.connection = None
        self.lock = threading.Lock()
        self._initialize_database()

    def _initialize_database(self):
        """Open the database and create the tables"""
        try:
            self.connection = sqlite3.connect(self.db_path, check_same_thread=False)
            self.connection.row_factory = sqlite3.Row
            self._create_tables()
            logger.info(f"Results store initialized: {self.db_path}")
        except sqlite3.Error as e:
            logger.error(f"Failed to initialize results store: {e}")
            raise

    def _create_tables(self):
        """Create the runs and measurements tables"""
        cursor = self.connection.cursor()
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                op TEXT,
                created_at TEXT,
                metadata TEXT
            )
        ''')
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS measurements (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER,
                level INTEGER,
                params TEXT,
                median_ns INTEGER,
                min_ns INTEGER,
                p99_ns INTEGER,
                status TEXT,
                reason TEXT,
                counters TEXT,
                FOREIGN KEY (run_id) REFERENCES runs (id)
            )
        ''')
        cursor.execute('CREATE INDEX IF NOT EXISTS idx_measurements_run ON measurements(run_id)')
        self.connection.commit()

    def add_run(self, op, metadata):
        """New run; returns its id, or False on failure"""
        with self.lock:
            try:
                cursor = self.connection.cursor()
                cursor.execute('INSERT INTO runs (op, created_at, metadata) VALUES (?, ?, ?)',
                               (op, datetime.now(timezone.utc).isoformat(),
                                json.dumps(metadata, sort_keys=True)))
                self.connection.commit()
                return cursor.lastrowid
            except sqlite3.Error as e:
                logger.error(f"Error adding run: {e}")
                self.connection.rollback()
                return False

    def add_rows(self, run_id, rows):
        """Attach report rows to a run; rows keep their ok/skipped/failed status"""
        with self.lock:
            try:
                cursor = self.connection.cursor()
                cursor.executemany('''
                    INSERT INTO measurements
                    (run_id, level, params, median_ns, min_ns, p99_ns, status, reason, counters)
                    VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
                ''', [(run_id, row['level'], json.dumps(row['params'], sort_keys=True),
                       row['median_ns'], row['min_ns'], row['p99_ns'],
                       row['status'], row['reason'],
                       json.dumps(row.get('counters', {}), sort_keys=True))
                      for row in rows])
                self.connection.commit()
                return True
            except sqlite3.Error as e:
                logger.error(f"Error adding rows to run {run_id}: {e}")
                self.connection.rollback()
                return False

    def add_report(self, report):
        """Store a whole report; returns the run id, or False on failure"""
        run_id = self.add_run(report.op, report.metadata)
        if run_id is False or not self.add_rows(run_id, report.rows):
            return False
        logger.info(f"Stored run {run_id} ({report.op}, {len(report.rows)} rows)")
        return run_id

    def get_runs(self, op=None):
        """Runs in insertion order, optionally only those of one operation"""
        with self.lock:
            try:
                cursor = self.connection.cursor()
                if op is None:
                    cursor.execute('SELECT * FROM runs ORDER BY id')
                else:
                    cursor.execute('SELECT * FROM runs WHERE op = ? ORDER BY id', (op,))
                runs = [dict(row) for row in cursor.fetchall()]
            except sqlite3.Error as e:
                logger.error(f"Error reading runs: {e}")
                return []
        for run in runs:
            run['metadata'] = json.loads(run['metadata'])
        return runs

    def get_rows(self, run_id, status=None):
        """Measurements of a run, optionally filtered by status"""
        with self.lock:
            try:
                cursor = self.connection.cursor()
                if status is None:
                    cursor.execute('SELECT * FROM measurements WHERE run_id = ? ORDER BY id',
                                   (run_id,))
                else:
                    cursor.execute('SELECT * FROM measurements WHERE run_id = ? AND status = ? '
                                   'ORDER BY id', (run_id, status))
                rows = [dict(row) for row in cursor.fetchall()]
            except sqlite3.Error as e:
                logger.error(f"Error reading rows of run {run_id}: {e}")
                return []
        for row in rows:
            row['params'] = json.loads(row['params'])
            row['counters'] = json.loads(row['counters'])
        return rows

    def best_row(self, run_id):
        """Timed row with the lowest median, or None"""
        timed = [r for r in self.get_rows(run_id, STATUS_OK) if r['median_ns'] is not None]
        return min(timed, key=lambda r: r['median_ns']) if timed else None

    def close(self):
        """Close the database connection"""
        if self.connection:
            self.connection.close()
            self.connection = None
            logger.info("Results store closed")
