"""Hard-label oracles: query-counted classifier fronts, deterministic
synthetic models for desk-scale testing, and HTTP / subprocess clients
speaking the PNG wire protocols."""

import base64
import os
import subprocess
import threading

import numpy as np
import requests

from .errors import ConfigError, DimensionMismatch, OracleFailure
from .images import Image, encode_npy, encode_png

DEFAULT_TIMEOUT_MS = 10000
TIMEOUT_ENV_VAR = "DEVOPATCH_HTTP_TIMEOUT_MS"


class LabelOracle:
    """Base hard-label classifier: classify(Image) -> int.

    The query counter advances by exactly one per successful classification;
    failed remote calls never reach the model and leave it untouched. When a
    shape is declared, mismatched images are rejected before any query.
    """

    def __init__(self, shape=None):
        self._shape = tuple(int(v) for v in shape) if shape is not None else None
        self._count = 0
        self._lock = threading.Lock()

    @property
    def shape(self):
        return self._shape

    @property
    def query_count(self) -> int:
        return self._count

    def classify(self, image: Image) -> int:
        if self._shape is not None and image.shape != self._shape:
            raise DimensionMismatch(
                f"oracle expects images of shape {self._shape}, got {image.shape}"
            )
        label = self._classify(image)
        with self._lock:
            self._count += 1
        return int(label)

    def _classify(self, image: Image) -> int:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class ConstantLabelOracle(LabelOracle):
    """Returns the same label for every image."""

    def __init__(self, label: int, shape=None):
        super().__init__(shape)
        self._label = int(label)

    def _classify(self, image):
        return self._label


class QuadrantMaxOracle(LabelOracle):
    """Label = index of the quadrant with the highest mean intensity.

    Quadrants are 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right,
    split at H//2 and W//2; ties go to the lowest index.
    """

    def _classify(self, image):
        d = image.data
        hh, ww = image.height // 2, image.width // 2
        means = (
            d[:, :hh, :ww].mean(),
            d[:, :hh, ww:].mean(),
            d[:, hh:, :ww].mean(),
            d[:, hh:, ww:].mean(),
        )
        return int(np.argmax(means))


class ThresholdCoverageOracle(LabelOracle):
    """inside_label iff at least ``fraction`` of the region's pixels are bright.

    The region is an inclusive rectangle (i1, j1, i2, j2); a pixel counts as
    bright when its channel-mean intensity exceeds 0.5.
    """

    def __init__(self, region, fraction: float, inside_label: int, outside_label: int, shape=None):
        super().__init__(shape)
        self._region = tuple(int(v) for v in region)
        if len(self._region) != 4:
            raise ValueError("region must be (i1, j1, i2, j2)")
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("fraction must be in [0, 1]")
        self._fraction = float(fraction)
        self._inside = int(inside_label)
        self._outside = int(outside_label)

    def _classify(self, image):
        i1, j1, i2, j2 = self._region
        sub = image.data[:, i1 : i2 + 1, j1 : j2 + 1].mean(axis=0)
        bright = int(np.count_nonzero(sub > 0.5))
        return self._inside if bright >= self._fraction * sub.size else self._outside


class DominantChannelOracle(LabelOracle):
    """Label = index of the channel with the highest mean intensity."""

    def _classify(self, image):
        return int(np.argmax(image.data.mean(axis=(1, 2))))


class ScriptedOracle(LabelOracle):
    """Replays a fixed label sequence, cycling; ignores image content."""

    def __init__(self, labels, shape=None):
        super().__init__(shape)
        self._labels = [int(v) for v in labels]
        if not self._labels:
            raise ValueError("scripted oracle needs at least one label")
        self._next = 0
        self._seq_lock = threading.Lock()

    def _classify(self, image):
        with self._seq_lock:
            label = self._labels[self._next % len(self._labels)]
            self._next += 1
        return label


class HttpOracle(LabelOracle):
    """Remote classifier behind POST {endpoint}/classify.

    The request body is PNG bytes (or an npy tensor when ``content_type`` is
    ``application/x-npy``); the response must be HTTP 200 with a JSON object
    carrying an integer ``label`` field. Timeouts and connection errors are
    retried up to ``retries`` times; every failure raises OracleFailure and
    leaves the query counter unchanged.

    ``timeout_ms`` defaults to DEVOPATCH_HTTP_TIMEOUT_MS from the environment,
    falling back to 10000 ms.
    """

    def __init__(
        self,
        endpoint: str,
        shape=None,
        timeout_ms: int | None = None,
        retries: int = 0,
        bearer_token: str | None = None,
        content_type: str = "image/png",
    ):
        super().__init__(shape)
        if timeout_ms is None:
            timeout_ms = int(os.environ.get(TIMEOUT_ENV_VAR, DEFAULT_TIMEOUT_MS))
        self._timeout_s = timeout_ms / 1000.0
        self._retries = int(retries)
        self._url = endpoint.rstrip("/") + "/classify"
        if content_type not in ("image/png", "application/x-npy"):
            raise ValueError(f"unsupported content type {content_type!r}")
        self._content_type = content_type
        self._headers = {"Content-Type": content_type}
        if bearer_token:
            self._headers["Authorization"] = f"Bearer {bearer_token}"
        self._session = requests.Session()

    def _encode(self, image):
        if self._content_type == "image/png":
            return encode_png(image)
        return encode_npy(image)

    def _classify(self, image):
        body = self._encode(image)
        failure = None
        for _ in range(self._retries + 1):
            try:
                resp = self._session.post(
                    self._url, data=body, headers=self._headers, timeout=self._timeout_s
                )
            except requests.Timeout:
                failure = OracleFailure("timeout", f"no response within {self._timeout_s}s")
                continue
            except requests.ConnectionError as exc:
                failure = OracleFailure("connect", str(exc))
                continue
            except requests.RequestException as exc:
                raise OracleFailure("transport", str(exc)) from exc
            if resp.status_code != 200:
                raise OracleFailure(
                    "status", f"HTTP {resp.status_code} from {self._url}", status=resp.status_code
                )
            try:
                payload = resp.json()
                label = payload["label"]
            except (ValueError, KeyError, TypeError) as exc:
                raise OracleFailure("malformed", f"bad response body: {exc}") from exc
            if int(label) != label:
                raise OracleFailure("malformed", f"label field is not an integer: {label!r}")
            return int(label)
        raise failure

    def close(self):
        self._session.close()


class SubprocessOracle(LabelOracle):
    """Classifier child process speaking the line protocol: one base64-PNG
    request line out, one ASCII decimal label line back. A single request is
    in flight at a time; the oracle must not be shared across attack runs."""

    def __init__(self, command, shape=None):
        super().__init__(shape)
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise OracleFailure("spawn", f"cannot launch {command!r}: {exc}") from exc
        self._io_lock = threading.Lock()

    def _classify(self, image):
        line = base64.b64encode(encode_png(image)).decode("ascii")
        with self._io_lock:
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise OracleFailure("eof", f"child closed its input: {exc}") from exc
            reply = self._proc.stdout.readline()
        if reply == "":
            raise OracleFailure("eof", "child closed its output stream")
        try:
            return int(reply.strip())
        except ValueError as exc:
            raise OracleFailure("parse", f"expected a decimal label, got {reply!r}") from exc

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()


def make_oracle(spec: dict) -> LabelOracle:
    """Build an oracle from its config-file description ({"kind": ..., ...})."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("oracle", "must be an object with a 'kind' field")
    kind = spec["kind"]
    shape = spec.get("shape")
    if kind == "constant":
        if "label" not in spec:
            raise ConfigError("oracle.label", "required for the constant oracle")
        return ConstantLabelOracle(spec["label"], shape=shape)
    if kind == "quadrant":
        return QuadrantMaxOracle(shape=shape)
    if kind == "dominant-channel":
        return DominantChannelOracle(shape=shape)
    if kind == "threshold-coverage":
        try:
            return ThresholdCoverageOracle(
                spec["region"],
                spec["fraction"],
                spec["inside_label"],
                spec["outside_label"],
                shape=shape,
            )
        except KeyError as exc:
            raise ConfigError(f"oracle.{exc.args[0]}", "required for threshold-coverage") from exc
    if kind == "scripted":
        if "labels" not in spec:
            raise ConfigError("oracle.labels", "required for the scripted oracle")
        return ScriptedOracle(spec["labels"], shape=shape)
    if kind == "http":
        if "endpoint" not in spec:
            raise ConfigError("oracle.endpoint", "required for the http oracle")
        return HttpOracle(
            spec["endpoint"],
            shape=shape,
            timeout_ms=spec.get("timeout_ms"),
            retries=spec.get("retries", 0),
            bearer_token=spec.get("bearer_token"),
            content_type=spec.get("content_type", "image/png"),
        )
    if kind == "subprocess":
        if "command" not in spec:
            raise ConfigError("oracle.command", "required for the subprocess oracle")
        return SubprocessOracle(spec["command"], shape=shape)
    raise ConfigError("oracle.kind", f"unknown oracle kind {kind!r}")
