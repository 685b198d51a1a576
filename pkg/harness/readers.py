"""
Matrix Market and LIBSVM readers and writers.

Floats are written with repr() so every value reads back bit-for-bit.
"""
import logging
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from django.core.exceptions import ValidationError

from builders.datasets import LabeledDataset

logger = logging.getLogger(__name__)

ZERO_ONE_LABELS = {0.0: -1, 1.0: 1}
ONE_TWO_LABELS = {1.0: 1, 2.0: -1}


class FormatError(ValidationError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, message, line_number=None, path=None):
        self.line_number = line_number
        self.path = path
        location = f"{path}:" if path else ''
        if line_number is not None:
            location += f"line {line_number}: "
        super().__init__(f"{location}{message}")


def _numbered_lines(path):
    with open(path, 'r') as handle:
        for number, line in enumerate(handle, start=1):
            yield number, line.rstrip('\n')


def _parse_number(token, field, number, path):
    try:
        if field == 'integer':
            return float(int(token))
        return float(token)
    except ValueError:
        raise FormatError(f"Cannot parse '{token}' as {field}", number, path) from None


def read_matrix_market(path):
    """
    Read a Matrix Market file.

    Returns:
        csr_matrix for coordinate files; ndarray for array files, 1-D when
        the matrix has a single column
    """
    path = Path(path)
    lines = _numbered_lines(path)
    try:
        number, header = next(lines)
    except StopIteration:
        raise FormatError("Empty file", 1, path) from None

    tokens = header.split()
    if len(tokens) != 5 or tokens[0] != '%%MatrixMarket' or tokens[1].lower() != 'matrix':
        raise FormatError("Expected '%%MatrixMarket matrix <format> <field> <symmetry>' header", number, path)
    layout, field, symmetry = (token.lower() for token in tokens[2:])
    if layout not in ('coordinate', 'array'):
        raise FormatError(f"Unsupported format '{layout}'", number, path)
    if field not in ('real', 'integer', 'pattern') or (field == 'pattern' and layout == 'array'):
        raise FormatError(f"Unsupported field '{field}'", number, path)
    if symmetry not in ('general', 'symmetric'):
        raise FormatError(f"Unsupported symmetry '{symmetry}'", number, path)

    size = None
    for number, line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith('%'):
            continue
        size = stripped.split()
        break
    if size is None:
        raise FormatError("Missing size line", number, path)
    expected = 3 if layout == 'coordinate' else 2
    if len(size) != expected:
        raise FormatError(f"Size line needs {expected} integers", number, path)
    try:
        dims = [int(token) for token in size]
    except ValueError:
        raise FormatError("Size line must contain integers", number, path) from None
    if any(value < 0 for value in dims):
        raise FormatError("Negative size", number, path)
    rows, cols = dims[0], dims[1]
    if symmetry == 'symmetric' and rows != cols:
        raise FormatError("Symmetric matrix must be square", number, path)

    if layout == 'array':
        return _read_array_entries(lines, rows, cols, field, symmetry, number, path)
    return _read_coordinate_entries(lines, rows, cols, dims[2], field, symmetry, number, path)


def _read_array_entries(lines, rows, cols, field, symmetry, number, path):
    if symmetry == 'symmetric':
        positions = [(i, j) for j in range(cols) for i in range(j, rows)]
    else:
        positions = [(i, j) for j in range(cols) for i in range(rows)]
    values = np.zeros((rows, cols))
    count = 0
    for number, line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith('%'):
            continue
        tokens = stripped.split()
        if len(tokens) != 1:
            raise FormatError("Array entries hold exactly one value per line", number, path)
        if count >= len(positions):
            raise FormatError(f"More than {len(positions)} entries", number, path)
        i, j = positions[count]
        values[i, j] = _parse_number(tokens[0], field, number, path)
        if symmetry == 'symmetric':
            values[j, i] = values[i, j]
        count += 1
    if count != len(positions):
        raise FormatError(f"Expected {len(positions)} entries, found {count}", number, path)
    if cols == 1:
        return values[:, 0]
    return values


def _read_coordinate_entries(lines, rows, cols, nnz, field, symmetry, number, path):
    row_index, col_index, data = [], [], []
    seen = set()
    count = 0
    for number, line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith('%'):
            continue
        tokens = stripped.split()
        width = 2 if field == 'pattern' else 3
        if len(tokens) != width:
            raise FormatError(f"Coordinate entries need {width} tokens", number, path)
        if count >= nnz:
            raise FormatError(f"More than the declared {nnz} entries", number, path)
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise FormatError("Entry indices must be integers", number, path) from None
        if not (1 <= i <= rows and 1 <= j <= cols):
            raise FormatError(f"Index ({i}, {j}) outside {rows}x{cols}", number, path)
        if symmetry == 'symmetric' and j > i:
            raise FormatError(f"Symmetric entry ({i}, {j}) above the diagonal", number, path)
        if (i, j) in seen:
            raise FormatError(f"Duplicate entry ({i}, {j})", number, path)
        seen.add((i, j))
        value = 1.0 if field == 'pattern' else _parse_number(tokens[2], field, number, path)
        row_index.append(i - 1)
        col_index.append(j - 1)
        data.append(value)
        if symmetry == 'symmetric' and i != j:
            row_index.append(j - 1)
            col_index.append(i - 1)
            data.append(value)
        count += 1
    if count != nnz:
        raise FormatError(f"Expected {nnz} entries, found {count}", number, path)
    return sp.csr_matrix((data, (row_index, col_index)), shape=(rows, cols))


def write_matrix_market(path, matrix):
    """Coordinate format for sparse input, array format (column-major) otherwise."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as handle:
        if sp.issparse(matrix):
            coo = sp.coo_matrix(matrix)
            order = np.lexsort((coo.col, coo.row))
            handle.write('%%MatrixMarket matrix coordinate real general\n')
            handle.write(f'{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n')
            for k in order:
                handle.write(f'{coo.row[k] + 1} {coo.col[k] + 1} {float(coo.data[k])!r}\n')
        else:
            dense = np.asarray(matrix, dtype=float)
            if dense.ndim == 1:
                dense = dense[:, np.newaxis]
            handle.write('%%MatrixMarket matrix array real general\n')
            handle.write(f'{dense.shape[0]} {dense.shape[1]}\n')
            for value in dense.ravel(order='F'):
                handle.write(f'{float(value)!r}\n')
    return path


def read_libsvm(path, label_map=None, num_features=None):
    """
    Read `label idx:val ...` lines with strictly ascending 1-based indices.

    Args:
        path: input file
        label_map: optional {raw label: ±1} mapping, e.g. ZERO_ONE_LABELS
        num_features: fixed feature dimension; inferred from the data if None

    Returns:
        LabeledDataset
    """
    path = Path(path)
    labels, row_index, col_index, data = [], [], [], []
    largest = 0
    row = 0
    for number, line in _numbered_lines(path):
        content = line.split('#', 1)[0].strip()
        if not content:
            continue
        tokens = content.split()
        try:
            raw = float(tokens[0])
        except ValueError:
            raise FormatError(f"Cannot parse label '{tokens[0]}'", number, path) from None
        if label_map is not None:
            if raw not in label_map:
                raise FormatError(f"Label {tokens[0]} has no mapping", number, path)
            label = label_map[raw]
        elif raw in (1.0, -1.0):
            label = int(raw)
        else:
            raise FormatError(f"Label {tokens[0]} is not +1 or -1", number, path)
        labels.append(label)

        previous = 0
        for token in tokens[1:]:
            index_text, separator, value_text = token.partition(':')
            if not separator:
                raise FormatError(f"Feature token '{token}' is not idx:value", number, path)
            try:
                index = int(index_text)
                value = float(value_text)
            except ValueError:
                raise FormatError(f"Cannot parse feature token '{token}'", number, path) from None
            if index < 1:
                raise FormatError(f"Feature index {index} must be at least 1", number, path)
            if index <= previous:
                raise FormatError(f"Feature indices must ascend ({previous} then {index})", number, path)
            if num_features is not None and index > num_features:
                raise FormatError(f"Feature index {index} exceeds dimension {num_features}", number, path)
            previous = index
            largest = max(largest, index)
            row_index.append(row)
            col_index.append(index - 1)
            data.append(value)
        row += 1

    width = largest if num_features is None else num_features
    features = sp.csr_matrix((data, (row_index, col_index)), shape=(row, width))
    logger.debug(f"Read {row} examples with {width} features from {path}")
    return LabeledDataset(features, np.asarray(labels, dtype=float))


def write_libsvm(path, dataset):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    features = sp.csr_matrix(dataset.features)
    features.sort_indices()
    with open(path, 'w') as handle:
        for row, label in enumerate(dataset.labels):
            start, stop = features.indptr[row], features.indptr[row + 1]
            parts = ['+1' if label > 0 else '-1']
            parts.extend(
                f'{index + 1}:{float(value)!r}'
                for index, value in zip(features.indices[start:stop], features.data[start:stop])
            )
            handle.write(' '.join(parts) + '\n')
    return path
