"""Graph nodes from weight matrices, sensitivity scores, and node samples.

A weight matrix is factored through its SVD into rank-one components; each
component i contributes a node (A_i, B_i) with A_i = s_i * u_i (scaled left
singular vector) and B_i = v_i (unit right singular vector), and the layer
bias contributes one extra node, so a layer with r kept components yields
r + 1 nodes.

Per training step, elementwise sensitivities |value * grad| of the component
tensors feed two exponential moving averages: a smoothed sensitivity and a
smoothed absolute deviation around it.  Their elementwise product is the
score; node values average the scores of the node's tensors (half-mean of
the A part plus half-mean of the B part for pairs, half-mean for the bias).
Collecting node values across steps gives the sample matrix whose mean picks
the important set and whose covariance feeds the graphical model.

All operations are pure; importance state is threaded functionally (one
owner per tensor).  Step dumps on disk are directories of JSON records
{step, layer_id, tensor: "A"|"B"|"b", index, values, grads}; component
indices are 0-based throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError

__all__ = [
    "LayerShape",
    "NodeLayout",
    "LayerDecomposition",
    "TensorKey",
    "ImportanceState",
    "SampleSet",
    "decompose_layer",
    "sensitivity",
    "update_score",
    "node_value_pair",
    "node_value_bias",
    "sample_statistics",
    "select_important",
    "replay_scores",
    "read_score_dump",
]

BIAS = "b"
PAIR_A = "A"
PAIR_B = "B"


@dataclass(frozen=True)
class LayerShape:
    """Shape summary of one layer: d1 x d2 weight, r kept components."""

    layer_id: int
    d1: int
    d2: int
    r: int

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise ValueError(f"layer {self.layer_id}: dimensions must be >= 1")
        if not 1 <= self.r <= min(self.d1, self.d2):
            raise ValueError(
                f"layer {self.layer_id}: r={self.r} outside [1, min(d1, d2)={min(self.d1, self.d2)}]"
            )


@dataclass(frozen=True)
class NodeLayout:
    """Node ordering over layers: per layer the r pairs then the bias.

    The flat index runs over layers in the given order and is a bijection
    onto range(n) with n = sum(r + 1).
    """

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        ids = [layer.layer_id for layer in layers]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate layer ids: {ids}")
        object.__setattr__(self, "layers", layers)

    @property
    def n(self) -> int:
        return sum(layer.r + 1 for layer in self.layers)

    def node_names(self) -> tuple:
        names = []
        for layer in self.layers:
            names.extend(f"L{layer.layer_id}:A{i}" for i in range(layer.r))
            names.append(f"L{layer.layer_id}:b")
        return tuple(names)

    def flat_index(self, layer_id: int, component) -> int:
        """Flat node index of pair ``component`` (int) or the bias ("b")."""
        offset = 0
        for layer in self.layers:
            if layer.layer_id == layer_id:
                if component == BIAS:
                    return offset + layer.r
                comp = int(component)
                if not 0 <= comp < layer.r:
                    raise ValueError(f"layer {layer_id} has no component {component}")
                return offset + comp
            offset += layer.r + 1
        raise ValueError(f"unknown layer id {layer_id}")


@dataclass(frozen=True)
class LayerDecomposition:
    """Rank-r factorization of a weight matrix plus the discarded remainder.

    ``left_scaled`` has columns A_i = s_i * u_i (d1 x r); ``right_unit`` has
    unit-norm rows B_i (r x d2); ``residual`` is the rank-(min(d1,d2) - r)
    remainder, so left_scaled @ right_unit + residual rebuilds the input
    exactly.  ``singular_values`` keeps the full spectrum, nonincreasing.
    """

    left_scaled: np.ndarray
    right_unit: np.ndarray
    residual: np.ndarray
    singular_values: np.ndarray = field(repr=False)

    @property
    def rank(self) -> int:
        return self.left_scaled.shape[1]

    def component(self, i: int):
        return self.left_scaled[:, i], self.right_unit[i, :]

    def reconstruction(self) -> np.ndarray:
        return self.left_scaled @ self.right_unit

    def tail_energy(self) -> float:
        """Squared Frobenius norm of the residual, = sum of squared discarded singular values."""
        return float(np.sum(self.residual**2))


def decompose_layer(w0, r: int) -> LayerDecomposition:
    """Split a d1 x d2 weight matrix into r scaled rank-one components.

    Components come out in nonincreasing singular-value order.  Sign
    convention: the largest-magnitude entry of each left vector is made
    nonnegative (right vector flipped to compensate) so decompositions are
    reproducible across backends.
    """
    w0 = np.asarray(w0, dtype=float)
    if w0.ndim != 2:
        raise ValueError(f"weight must be a matrix, got ndim={w0.ndim}")
    if not 1 <= r <= min(w0.shape):
        raise ValueError(f"r={r} outside [1, min(d1, d2)={min(w0.shape)}]")
    try:
        u, s, vt = np.linalg.svd(w0, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge for shape {w0.shape}") from exc
    for i in range(r):
        peak = int(np.argmax(np.abs(u[:, i])))
        if u[peak, i] < 0:
            u[:, i] = -u[:, i]
            vt[i, :] = -vt[i, :]
    left = u[:, :r] * s[:r]
    right = vt[:r, :]
    return LayerDecomposition(
        left_scaled=left,
        right_unit=right,
        residual=w0 - left @ right,
        singular_values=s.copy(),
    )


def sensitivity(values, grads) -> np.ndarray:
    """Elementwise |value * grad|, the first-order loss-change magnitude."""
    values = np.asarray(values, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if values.shape != grads.shape:
        raise ValueError(f"shape mismatch: values {values.shape} vs grads {grads.shape}")
    return np.abs(values * grads)


@dataclass(frozen=True)
class ImportanceState:
    """EMA pair tracking smoothed sensitivity and its absolute deviation.

    ``mean`` and ``spread`` start at zero (the base case is unspecified
    upstream; zero makes step-1 values analytic).  ``step`` counts completed
    updates.
    """

    mean: np.ndarray
    spread: np.ndarray
    beta1: float
    beta2: float
    step: int = 0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        spread = np.asarray(self.spread, dtype=float)
        if mean.shape != spread.shape:
            raise ValueError("mean/spread shape mismatch")
        for name, beta in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= beta < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {beta}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(spread))):
            raise ValueError("EMA state contains non-finite entries")
        if np.any(mean < 0) or np.any(spread < 0):
            raise ValueError("EMA state must be nonnegative")
        mean.flags.writeable = False
        spread.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "spread", spread)

    @classmethod
    def zeros(cls, shape, beta1: float, beta2: float) -> "ImportanceState":
        return cls(np.zeros(shape), np.zeros(shape), beta1, beta2)


def update_score(state: ImportanceState, sens_k):
    """One EMA step; returns the new state and the elementwise score.

    mean' = beta1*mean + (1-beta1)*sens
    spread' = beta2*spread + (1-beta2)*|sens - mean'|   (uses the new mean)
    score = mean' * spread'
    """
    sens = np.asarray(sens_k, dtype=float)
    if sens.shape != state.mean.shape:
        raise ValueError(f"sensitivity shape {sens.shape} does not match state {state.mean.shape}")
    mean = state.beta1 * state.mean + (1.0 - state.beta1) * sens
    spread = state.beta2 * state.spread + (1.0 - state.beta2) * np.abs(sens - mean)
    score = mean * spread
    new_state = ImportanceState(mean, spread, state.beta1, state.beta2, state.step + 1)
    return new_state, score


def node_value_pair(score_a, score_b) -> float:
    """Half-mean of the A-part scores plus half-mean of the B-part scores."""
    score_a = np.asarray(score_a, dtype=float)
    score_b = np.asarray(score_b, dtype=float)
    if score_a.size == 0 or score_b.size == 0:
        raise ValueError("pair node needs nonempty score vectors")
    return 0.5 * float(np.mean(score_a)) + 0.5 * float(np.mean(score_b))


def node_value_bias(score_b) -> float:
    """Half the mean of the bias scores (the 1/2 factor is intentional upstream)."""
    score_b = np.asarray(score_b, dtype=float)
    if score_b.size == 0:
        raise ValueError("bias node needs a nonempty score vector")
    return 0.5 * float(np.mean(score_b))


@dataclass(frozen=True)
class SampleSet:
    """m x n matrix of node values, one row per step, one column per node."""

    values: np.ndarray
    names: tuple
    layout: NodeLayout = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"sample matrix must be 2-D, got ndim={values.ndim}")
        if not np.all(np.isfinite(values)):
            raise ValueError("sample matrix contains non-finite entries")
        if np.any(values < 0):
            raise ValueError("node values must be nonnegative")
        names = tuple(str(name) for name in self.names)
        if len(names) != values.shape[1]:
            raise ValueError(f"{len(names)} names for {values.shape[1]} columns")
        if len(set(names)) != len(names):
            raise ValueError("node names must be unique")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def save_csv(self, path) -> None:
        path = Path(path)
        with path.open("w") as handle:
            handle.write(",".join(self.names) + "\n")
            for row in self.values:
                handle.write(",".join(format(v, ".17g") for v in row) + "\n")

    @classmethod
    def load_csv(cls, path) -> "SampleSet":
        path = Path(path)
        with path.open() as handle:
            header = handle.readline().strip()
            if not header:
                raise ValueError(f"{path.name}: missing header row")
            names = tuple(part.strip() for part in header.split(","))
            values = np.loadtxt(handle, delimiter=",", ndmin=2, dtype=float)
        if values.size == 0:
            values = values.reshape(0, len(names))
        return cls(values=values, names=names)


def sample_statistics(samples: SampleSet, standardize: bool = False):
    """Column means and the (m-1)-normalized sample covariance, symmetrized.

    With ``standardize`` the covariance is computed on per-column z-scores
    (constant columns left at zero), i.e. it becomes the correlation matrix;
    the returned mean is always the raw column mean, which is what the
    important-set selection consumes.
    """
    values = samples.values
    m = values.shape[0]
    if m < 2:
        raise ValueError(f"need at least 2 samples for a covariance, got {m}")
    mean = values.mean(axis=0)
    centered = values - mean
    if standardize:
        scale = values.std(axis=0, ddof=1)
        scale[scale == 0.0] = 1.0
        centered = centered / scale
    cov = centered.T @ centered / (m - 1)
    return mean, 0.5 * (cov + cov.T)


def select_important(mean, h: int) -> tuple:
    """Indices of the h largest mean entries; ties go to the lower index."""
    mean = np.asarray(mean, dtype=float)
    n = mean.size
    if not 1 <= h <= n:
        raise ValueError(f"h={h} outside [1, n={n}]")
    # stable sort keeps lower indices first among equal values
    order = np.argsort(-mean, kind="stable")
    return tuple(sorted(int(i) for i in order[:h]))


@dataclass(frozen=True)
class TensorKey:
    """Identity of one component tensor: (layer, kind, component index).

    ``kind`` is "A", "B" or "b"; the bias carries no component index.
    """

    layer_id: int
    kind: str
    index: int = None

    def __post_init__(self):
        if self.kind not in (PAIR_A, PAIR_B, BIAS):
            raise ValueError(f"tensor kind must be A, B or b, got {self.kind!r}")
        if self.kind == BIAS:
            object.__setattr__(self, "index", None)
        elif self.index is None or int(self.index) < 0:
            raise ValueError(f"tensor {self.kind} needs a component index >= 0")
        else:
            object.__setattr__(self, "index", int(self.index))

    def sort_key(self):
        return (self.layer_id, {PAIR_A: 0, PAIR_B: 1, BIAS: 2}[self.kind], self.index or 0)


def _layout_from_keys(keys) -> list:
    """Validate the tensor key set and return [(layer_id, rank)] in layer order."""
    by_layer = {}
    for key in keys:
        by_layer.setdefault(key.layer_id, []).append(key)
    layers = []
    for layer_id in sorted(by_layer):
        layer_keys = by_layer[layer_id]
        a_idx = sorted(k.index for k in layer_keys if k.kind == PAIR_A)
        b_idx = sorted(k.index for k in layer_keys if k.kind == PAIR_B)
        has_bias = any(k.kind == BIAS for k in layer_keys)
        if not has_bias:
            raise ValueError(f"layer {layer_id}: bias tensor missing from stream")
        if a_idx != b_idx or a_idx != list(range(len(a_idx))) or not a_idx:
            raise ValueError(
                f"layer {layer_id}: pair components must be 0..r-1 on both sides, "
                f"got A={a_idx} B={b_idx}"
            )
        layers.append((layer_id, len(a_idx)))
    if not layers:
        raise ValueError("score stream is empty")
    return layers


def replay_scores(steps, beta1: float, beta2: float) -> SampleSet:
    """Run the EMA score recursion over an in-memory step stream.

    ``steps`` is a sequence of dicts mapping :class:`TensorKey` to a
    ``(values, grads)`` pair; every step must cover exactly the same tensor
    set.  Returns the node-value sample matrix, one row per step, columns in
    layout order (layers ascending, pairs then bias).
    """
    if not steps:
        raise ValueError("score stream is empty")
    keys = sorted(steps[0].keys(), key=TensorKey.sort_key)
    layer_ranks = _layout_from_keys(keys)

    shapes = {}
    states = {}
    for key in keys:
        values, _ = steps[0][key]
        shapes[key] = np.asarray(values, dtype=float).shape
        states[key] = ImportanceState.zeros(shapes[key], beta1, beta2)

    layer_dims = {}
    for layer_id, rank in layer_ranks:
        d1 = shapes[TensorKey(layer_id, PAIR_A, 0)][0]
        d2 = shapes[TensorKey(layer_id, PAIR_B, 0)][0]
        for i in range(rank):
            if shapes[TensorKey(layer_id, PAIR_A, i)] != (d1,):
                raise ValueError(f"layer {layer_id}: A{i} shape differs from A0")
            if shapes[TensorKey(layer_id, PAIR_B, i)] != (d2,):
                raise ValueError(f"layer {layer_id}: B{i} shape differs from B0")
        layer_dims[layer_id] = (d1, d2)

    layout = NodeLayout(
        tuple(
            LayerShape(layer_id, layer_dims[layer_id][0], layer_dims[layer_id][1], rank)
            for layer_id, rank in layer_ranks
        )
    )

    rows = []
    for step_no, step in enumerate(steps):
        if sorted(step.keys(), key=TensorKey.sort_key) != keys:
            raise ValueError(f"step {step_no}: tensor set differs from step 0")
        scores = {}
        for key in keys:
            values, grads = step[key]
            states[key], scores[key] = update_score(states[key], sensitivity(values, grads))
        row = []
        for layer_id, rank in layer_ranks:
            for i in range(rank):
                row.append(
                    node_value_pair(
                        scores[TensorKey(layer_id, PAIR_A, i)],
                        scores[TensorKey(layer_id, PAIR_B, i)],
                    )
                )
            row.append(node_value_bias(scores[TensorKey(layer_id, BIAS)]))
        rows.append(row)

    return SampleSet(values=np.asarray(rows), names=layout.node_names(), layout=layout)


_RECORD_KEYS = {"step", "layer_id", "tensor", "values", "grads"}


def _parse_record(record, where: str):
    if not isinstance(record, dict):
        raise ValueError(f"{where}: record must be a JSON object")
    missing = _RECORD_KEYS - set(record)
    if missing:
        raise ValueError(f"{where}: missing keys {sorted(missing)}")
    kind = record["tensor"]
    if kind not in (PAIR_A, PAIR_B, BIAS):
        raise ValueError(f"{where}: tensor must be 'A', 'B' or 'b', got {kind!r}")
    index = record.get("index")
    if kind != BIAS and index is None:
        raise ValueError(f"{where}: tensor {kind} needs an 'index' field")
    try:
        key = TensorKey(int(record["layer_id"]), kind, index)
        step = int(record["step"])
        values = np.asarray(record["values"], dtype=float)
        grads = np.asarray(record["grads"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{where}: {exc}") from exc
    if values.ndim != 1 or values.shape != grads.shape:
        raise ValueError(f"{where}: values/grads must be equal-length 1-D arrays")
    return step, key, values, grads


def read_score_dump(dump_dir):
    """Load a dump directory into the step-stream form used by replay_scores.

    Every ``*.json`` file holds one record object or a list of them; records
    are pooled across files and grouped by step (ascending).  Malformed
    records raise ValueError naming the file and record position.
    """
    dump_dir = Path(dump_dir)
    if not dump_dir.is_dir():
        raise ValueError(f"dump directory not found: {dump_dir}")
    files = sorted(dump_dir.glob("*.json"))
    if not files:
        raise ValueError(f"no .json records in {dump_dir}")
    by_step = {}
    for file in files:
        try:
            payload = json.loads(file.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{file.name}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        records = payload if isinstance(payload, list) else [payload]
        for pos, record in enumerate(records):
            step, key, values, grads = _parse_record(record, f"{file.name}: record {pos}")
            slot = by_step.setdefault(step, {})
            if key in slot:
                raise ValueError(f"{file.name}: record {pos}: duplicate tensor {key} at step {step}")
            slot[key] = (values, grads)
    return [by_step[step] for step in sorted(by_step)]
