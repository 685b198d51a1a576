"""
Tests for the Matrix Market and LIBSVM readers and writers.
"""
import tempfile
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from django.test import SimpleTestCase

from builders.datasets import LabeledDataset
from harness.readers import (
    ZERO_ONE_LABELS,
    FormatError,
    read_libsvm,
    read_matrix_market,
    write_libsvm,
    write_matrix_market,
)


class FileTestCase(SimpleTestCase):
    """Gives each test its own scratch directory"""

    def setUp(self):
        self._directory = tempfile.TemporaryDirectory()
        self.root = Path(self._directory.name)

    def tearDown(self):
        self._directory.cleanup()

    def write(self, text, name='input.txt'):
        path = self.root / name
        path.write_text(text)
        return path

    def assertFormatError(self, text, line_number, **kwargs):
        reader = kwargs.pop('reader', read_matrix_market)
        with self.assertRaises(FormatError) as context:
            reader(self.write(text), **kwargs)
        self.assertEqual(context.exception.line_number, line_number)
        return context.exception


class MatrixMarketReadTest(FileTestCase):
    """Reading well-formed files"""

    def test_coordinate_diagonal(self):
        """diag(1, 2) with a comment line"""
        matrix = read_matrix_market(self.write(
            '%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 1 1.0\n2 2 2.0\n'
        ))
        self.assertTrue(sp.issparse(matrix))
        np.testing.assert_array_equal(matrix.toarray(), [[1.0, 0.0], [0.0, 2.0]])

    def test_array_column_is_vector(self):
        """A 2×1 array file reads as a 1-D vector"""
        vector = read_matrix_market(self.write('%%MatrixMarket matrix array real general\n2 1\n1.5\n-2\n'))
        self.assertEqual(vector.shape, (2,))
        np.testing.assert_array_equal(vector, [1.5, -2.0])

    def test_array_is_column_major(self):
        """Entries fill columns first"""
        matrix = read_matrix_market(self.write('%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n'))
        np.testing.assert_array_equal(matrix, [[1.0, 3.0], [2.0, 4.0]])

    def test_symmetric(self):
        """Lower-triangle entries are mirrored in both layouts"""
        coordinate = read_matrix_market(self.write(
            '%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 4.0\n2 1 -1.0\n'
        ))
        np.testing.assert_array_equal(coordinate.toarray(), [[4.0, -1.0], [-1.0, 0.0]])
        array = read_matrix_market(self.write('%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n3\n'))
        np.testing.assert_array_equal(array, [[1.0, 2.0], [2.0, 3.0]])

    def test_pattern_and_integer(self):
        """Pattern entries are ones; integer entries are parsed exactly"""
        pattern = read_matrix_market(self.write('%%MatrixMarket matrix coordinate pattern general\n2 3 2\n1 3\n2 1\n'))
        np.testing.assert_array_equal(pattern.toarray(), [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        integer = read_matrix_market(self.write('%%MatrixMarket matrix coordinate integer general\n1 1 1\n1 1 -7\n'))
        self.assertEqual(integer[0, 0], -7.0)


class MatrixMarketErrorTest(FileTestCase):
    """Malformed files report the offending line"""

    def test_header(self):
        """Unknown field, unknown format and a missing banner"""
        self.assertFormatError('%%MatrixMarket matrix coordinate complex general\n1 1 0\n', 1)
        self.assertFormatError('%%MatrixMarket matrix dense real general\n1 1\n1\n', 1)
        self.assertFormatError('1 1 1\n1 1 1.0\n', 1)
        self.assertFormatError('%%MatrixMarket matrix array pattern general\n1 1\n1\n', 1)
        self.assertFormatError('', 1)

    def test_size_line(self):
        """Wrong token count and non-integers"""
        self.assertFormatError('%%MatrixMarket matrix coordinate real general\n% c\n2 2\n', 3)
        self.assertFormatError('%%MatrixMarket matrix array real general\n2 x\n', 2)
        self.assertFormatError('%%MatrixMarket matrix coordinate real symmetric\n2 3 0\n', 2)

    def test_entries(self):
        """Range, triangle, duplicate, parse and count errors"""
        header = '%%MatrixMarket matrix coordinate real general\n2 2 2\n'
        self.assertFormatError(header + '1 1 1.0\n3 1 1.0\n', 4)
        self.assertFormatError(header + '1 1 1.0\n1 1 2.0\n', 4)
        self.assertFormatError(header + '1 1 abc\n2 2 1.0\n', 3)
        self.assertFormatError(header + '1 1 1.0\n', 3)
        self.assertFormatError(header + '1 1 1.0\n2 2 1.0\n1 2 1.0\n', 5)
        self.assertFormatError(
            '%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1.0\n', 3
        )
        self.assertFormatError(
            '%%MatrixMarket matrix coordinate integer general\n1 1 1\n1 1 2.5\n', 3
        )

    def test_array_counts(self):
        """Too few and too many array entries"""
        self.assertFormatError('%%MatrixMarket matrix array real general\n2 1\n1\n', 3)
        self.assertFormatError('%%MatrixMarket matrix array real general\n1 1\n1\n2\n', 4)

    def test_message_names_the_file(self):
        """The message carries path and line"""
        error = self.assertFormatError('%%MatrixMarket matrix coordinate real general\n1 1 1\n2 1 1.0\n', 3)
        self.assertIn('line 3', error.messages[0])
        self.assertIn('input.txt', error.messages[0])


class MatrixMarketWriteTest(FileTestCase):
    """Writing and reading back"""

    def test_sparse_round_trip_is_exact(self):
        """Values survive bit-for-bit and entries are sorted"""
        matrix = sp.random(30, 20, density=0.2, format='csr', random_state=np.random.default_rng(0))
        path = write_matrix_market(self.root / 'A.mtx', matrix)
        lines = path.read_text().splitlines()
        self.assertEqual(lines[0], '%%MatrixMarket matrix coordinate real general')
        positions = [tuple(int(token) for token in line.split()[:2]) for line in lines[2:]]
        self.assertEqual(positions, sorted(positions))
        again = read_matrix_market(path)
        self.assertEqual((again != matrix).nnz, 0)

    def test_dense_round_trip(self):
        """Dense matrices use the array layout"""
        matrix = np.random.default_rng(1).standard_normal((4, 3))
        path = write_matrix_market(self.root / 'nested' / 'C.mtx', matrix)
        self.assertTrue(path.read_text().startswith('%%MatrixMarket matrix array real general\n4 3\n'))
        np.testing.assert_array_equal(read_matrix_market(path), matrix)
        vector = np.array([0.1, 1 / 3, -2.5e-300])
        np.testing.assert_array_equal(read_matrix_market(write_matrix_market(self.root / 'b.mtx', vector)), vector)


class LibsvmTest(FileTestCase):
    """LIBSVM reading and writing"""

    def test_example(self):
        """Comments, empty rows and the inferred dimension"""
        data = read_libsvm(self.write('+1 1:0.5 3:-1.25  # note\n-1 2:2\n# only a comment\n\n+1\n'))
        self.assertEqual(data.num_examples, 3)
        self.assertEqual(data.num_features, 3)
        np.testing.assert_array_equal(data.labels, [1.0, -1.0, 1.0])
        np.testing.assert_array_equal(
            data.dense_features(), [[0.5, 0.0, -1.25], [0.0, 2.0, 0.0], [0.0, 0.0, 0.0]]
        )

    def test_label_map(self):
        """0/1 labels map to −1/+1"""
        data = read_libsvm(self.write('0 1:1\n1 2:1\n'), label_map=ZERO_ONE_LABELS, num_features=4)
        np.testing.assert_array_equal(data.labels, [-1.0, 1.0])
        self.assertEqual(data.num_features, 4)

    def test_errors(self):
        """Bad labels, indices and tokens report their line"""
        cases = [
            ('+1 1:1\n2 1:1\n', 2, {}),
            ('+1 3:1 2:1\n', 1, {}),
            ('+1 1:1 1:2\n', 1, {}),
            ('+1 0:1\n', 1, {}),
            ('-1 1:a\n', 1, {}),
            ('-1 1-1\n', 1, {}),
            ('# c\n+1 4:1\n', 2, {'num_features': 3}),
            ('x 1:1\n', 1, {}),
            ('2 1:1\n', 1, {'label_map': ZERO_ONE_LABELS}),
        ]
        for text, line_number, kwargs in cases:
            with self.subTest(text=text):
                self.assertFormatError(text, line_number, reader=read_libsvm, **kwargs)

    def test_round_trip(self):
        """A 100×50 random sparse dataset reads back identically"""
        rng = np.random.default_rng(2)
        features = sp.random(100, 50, density=0.1, format='csr', random_state=rng)
        labels = np.where(rng.random(100) < 0.5, -1.0, 1.0)
        path = write_libsvm(self.root / 'data.svm', LabeledDataset(features, labels))
        again = read_libsvm(path, num_features=50)
        np.testing.assert_array_equal(again.labels, labels)
        self.assertEqual((again.features != features).nnz, 0)

    def test_fuzzed_lines(self):
        """Valid random lines parse; one corrupted line is reported by number"""
        rng = np.random.default_rng(3)
        for trial in range(30):
            lines, rows = [], []
            for _ in range(20):
                indices = np.sort(rng.choice(np.arange(1, 16), size=rng.integers(0, 6), replace=False))
                values = rng.standard_normal(indices.size)
                label = '+1' if rng.random() < 0.5 else '-1'
                lines.append(' '.join([label] + [f'{int(i)}:{float(v)!r}' for i, v in zip(indices, values)]))
                row = np.zeros(15)
                row[indices - 1] = values
                rows.append(row)
            data = read_libsvm(self.write('\n'.join(lines) + '\n'), num_features=15)
            np.testing.assert_array_equal(data.dense_features(), rows)

            broken = int(rng.integers(0, 20))
            corruption = ['0:1.0', '16:1.0', '3:', 'abc', '2:1 1:1'][trial % 5]
            lines[broken] = f'+1 {corruption}'
            with self.subTest(trial=trial, corruption=corruption):
                self.assertFormatError('\n'.join(lines) + '\n', broken + 1, reader=read_libsvm, num_features=15)
