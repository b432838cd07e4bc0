"""Hard-label oracles: the only window the attack has into a victim model.

Every oracle answers classify() with a bare label.  A shared QueryLedger
counts each logical query exactly once no matter how many wrappers (defense,
budget) sit around the base oracle, so reported query budgets stay honest.
"""
from __future__ import annotations

import socket
import threading

import numpy as np
from scipy.spatial import cKDTree

from . import protocol
from .geometry import PointCloud


class OracleError(RuntimeError):
    """Base class for oracle failures; the attack engine treats these as fatal."""


class BudgetExhaustedError(OracleError):
    """The next query would exceed the configured budget."""


class RemoteOracleError(OracleError):
    """Base class for remote oracle failures."""


class OracleConnectionError(RemoteOracleError):
    """TCP connect or I/O failed."""


class OracleTimeoutError(RemoteOracleError):
    """The server did not answer within the timeout."""


class OracleProtocolError(RemoteOracleError):
    """The server sent something outside the wire protocol."""


class QueryLedger:
    """Thread-safe query counter with an optional hard budget.

    charge() is called once per logical classify, before the model runs; a
    call that would exceed the budget raises without consuming it.
    """

    def __init__(self, budget: int | None = None):
        if budget is not None and budget < 0:
            raise ValueError("budget must be non-negative")
        self.budget = budget
        self._total = 0
        self._lock = threading.Lock()

    @property
    def total_queries(self) -> int:
        return self._total

    def charge(self, amount: int = 1) -> None:
        with self._lock:
            if self.budget is not None and self._total + amount > self.budget:
                raise BudgetExhaustedError(
                    f"query budget {self.budget} exhausted at {self._total} queries"
                )
            self._total += amount


class HardLabelOracle:
    """Abstract hard-label classifier.

    Subclasses implement _classify; the public classify() charges the ledger
    first so wrappers that delegate to _classify never double-count.
    ``concurrent_safe`` declares whether classify may be called from several
    threads at once.
    """

    concurrent_safe: bool = False
    name: str = "oracle"

    def __init__(self, class_count: int, ledger: QueryLedger | None = None):
        if class_count < 2:
            raise ValueError("an oracle needs at least 2 classes")
        self.class_count = class_count
        self.ledger = ledger if ledger is not None else QueryLedger()

    def classify(self, cloud: PointCloud) -> int:
        self.ledger.charge()
        return self._classify(cloud)

    def _classify(self, cloud: PointCloud) -> int:
        raise NotImplementedError


def indicator(oracle: HardLabelOracle, cloud: PointCloud, y_true: int) -> int:
    """Adversarial indicator: +1 when the oracle's label differs from y_true."""
    if not 0 <= y_true < oracle.class_count:
        raise ValueError(f"y_true {y_true} outside [0, {oracle.class_count})")
    return 1 if oracle.classify(cloud) != y_true else -1


class NearestCentroidOracle(HardLabelOracle):
    """Labels a cloud by the prototype minimizing one-directional Chamfer.

    Prototypes are full point clouds (typically class means).  Distance is
    measured from the query cloud to the prototype; ties resolve to the
    lower label so the decision is deterministic.
    """

    concurrent_safe = True
    name = "nearest-centroid"

    def __init__(self, prototypes: list[tuple[PointCloud, int]],
                 ledger: QueryLedger | None = None):
        if len(prototypes) < 2:
            raise ValueError("need at least 2 prototypes")
        counts = {cloud.n for cloud, _ in prototypes}
        if len(counts) != 1:
            raise ValueError("prototypes must share one point count")
        labels = [int(label) for _, label in prototypes]
        if len(set(labels)) != len(labels):
            raise ValueError("prototype labels must be distinct")
        order = np.argsort(labels, kind="stable")
        self._labels = np.asarray(labels)[order]
        self._trees = [cKDTree(prototypes[i][0].points) for i in order]
        super().__init__(class_count=max(labels) + 1, ledger=ledger)

    def _classify(self, cloud: PointCloud) -> int:
        best_label, best_dist = -1, np.inf
        for label, tree in zip(self._labels, self._trees):
            d, _ = tree.query(cloud.points, k=1)
            chamfer = float(np.mean(d**2))
            if chamfer < best_dist:  # labels ascend, so strict < keeps the lower label on ties
                best_label, best_dist = int(label), chamfer
        return best_label


class LinearOracle(HardLabelOracle):
    """Binary oracle thresholding a fixed linear functional of the coordinates.

    classify returns 1 when <normal, flatten(cloud)> + offset > 0, else 0;
    the boundary itself belongs to the 0 side.  The decision boundary is a
    known hyperplane, which makes projection and gradient estimates exactly
    checkable.
    """

    concurrent_safe = True
    name = "linear"

    def __init__(self, normal: np.ndarray, offset: float,
                 ledger: QueryLedger | None = None):
        normal = np.asarray(normal, dtype=np.float64).ravel()
        if normal.size == 0 or not np.all(np.isfinite(normal)):
            raise ValueError("normal must be a finite non-empty vector")
        if np.linalg.norm(normal) < 1e-300:
            raise ValueError("normal must be non-zero")
        self.normal = normal
        self.offset = float(offset)
        super().__init__(class_count=2, ledger=ledger)

    def decision_value(self, cloud: PointCloud) -> float:
        flat = cloud.points.ravel()
        if flat.size != self.normal.size:
            raise ValueError(f"cloud dimension {flat.size} does not match normal size {self.normal.size}")
        return float(flat @ self.normal + self.offset)

    def _classify(self, cloud: PointCloud) -> int:
        return 1 if self.decision_value(cloud) > 0 else 0


class BudgetedOracle(HardLabelOracle):
    """Budget layer over an existing oracle; shares the inner ledger."""

    def __init__(self, inner: HardLabelOracle, budget: int):
        self.inner = inner
        inner.ledger.budget = budget
        self.concurrent_safe = inner.concurrent_safe
        self.name = inner.name
        super().__init__(class_count=inner.class_count, ledger=inner.ledger)

    def _classify(self, cloud: PointCloud) -> int:
        return self.inner._classify(cloud)


def with_budget(oracle: HardLabelOracle, budget: int) -> BudgetedOracle:
    """Wrap an oracle so the ledger rejects queries beyond ``budget``."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    return BudgetedOracle(oracle, budget)


class RemoteOracle(HardLabelOracle):
    """Client for the NDJSON-over-TCP oracle protocol.

    Connects eagerly and performs the info handshake (request id 0) to learn
    the class count and model name.  One request is in flight at a time per
    connection; ids increase monotonically and responses must echo them.
    Failures raise distinct error kinds and are never retried unless a
    retry count is configured; the attack engine treats them all as fatal.
    """

    concurrent_safe = False

    def __init__(self, host: str, port: int, timeout: float = 10.0, retries: int = 0):
        if retries < 0:
            raise ValueError("retries must be non-negative")
        self.host = host
        self.port = port
        self.timeout = timeout
        self.retries = retries
        self._sock: socket.socket | None = None
        self._reader = None
        self._next_id = 0
        self._connect()
        classes, name = self._handshake()
        self.name = name
        super().__init__(class_count=classes)

    def _connect(self) -> None:
        self.close()
        try:
            sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        except socket.timeout as exc:
            raise OracleTimeoutError(f"connect to {self.host}:{self.port} timed out") from exc
        except OSError as exc:
            raise OracleConnectionError(f"cannot connect to {self.host}:{self.port}: {exc}") from exc
        sock.settimeout(self.timeout)
        self._sock = sock
        self._reader = sock.makefile("rb")

    def _roundtrip(self, request: dict) -> dict:
        assert self._sock is not None
        try:
            self._sock.sendall(protocol.encode_message(request))
            line = self._reader.readline(protocol.MAX_LINE_BYTES)
        except socket.timeout as exc:
            raise OracleTimeoutError(f"oracle did not answer within {self.timeout}s") from exc
        except OSError as exc:
            raise OracleConnectionError(f"connection to oracle lost: {exc}") from exc
        if not line:
            raise OracleConnectionError("oracle closed the connection")
        try:
            return protocol.decode_message(line)
        except protocol.ProtocolViolation as exc:
            raise OracleProtocolError(str(exc)) from exc

    def _handshake(self) -> tuple[int, str]:
        obj = self._roundtrip(protocol.info_request(0))
        self._next_id = 1
        try:
            return protocol.parse_info_response(obj, expect_id=0)
        except protocol.ProtocolViolation as exc:
            raise OracleProtocolError(str(exc)) from exc

    def _classify(self, cloud: PointCloud) -> int:
        rid = self._next_id
        self._next_id += 1
        request = protocol.classify_request(rid, cloud.points)
        attempt = 0
        while True:
            try:
                obj = self._roundtrip(request)
                return protocol.parse_label_response(obj, expect_id=rid)
            except protocol.ProtocolViolation as exc:
                raise OracleProtocolError(str(exc)) from exc
            except (OracleConnectionError, OracleTimeoutError):
                if attempt >= self.retries:
                    raise
                attempt += 1
                self._connect()
                # Reconnect restarts the per-connection handshake contract.
                self._handshake()
                rid = self._next_id
                self._next_id += 1
                request = protocol.classify_request(rid, cloud.points)

    def close(self) -> None:
        if self._reader is not None:
            try:
                self._reader.close()
            except OSError:
                pass
            self._reader = None
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def __enter__(self) -> "RemoteOracle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
