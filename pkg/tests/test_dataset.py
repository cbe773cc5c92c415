import unittest

import numpy as np
import pandas as pd

from fairpls.dataset import ColumnKind, Dataset, load_csv, split_folds, train_test_split
from fairpls.encoding import ColumnRule, EncodingSpec
from fairpls.utils import ConfigurationError, DegenerateInputError, ParseError

from .common import datafile


def toy_schema(**extra):
    rules = {
        "age": ColumnRule.passthrough(),
        "color": ColumnRule.one_hot(),
        "smoker": ColumnRule.binary_map({"yes": 1, "no": 0}),
        "income": ColumnRule.passthrough(),
    }
    rules.update(extra)
    return EncodingSpec(rules)


class TestLoadCsv(unittest.TestCase):

    def test_load_with_missing_tokens(self):
        ds = load_csv(datafile("toy.csv"), toy_schema(), drop_rows_with=["?"])
        assert ds.n == 7
        assert ds.names == ["age", "color", "smoker", "income"]
        assert ds.column("age").kind == ColumnKind.numeric
        assert ds.column("color").kind == ColumnKind.categorical
        assert ds.column("smoker").kind == ColumnKind.binary
        assert ds.levels("color") == ("blue", "green", "red")
        assert ds.values("income")[3] == 75.1

    def test_unlisted_columns_are_ignored(self):
        ds = load_csv(datafile("toy.csv"), EncodingSpec({"age": ColumnRule.passthrough()}))
        assert ds.names == ["age"]
        assert ds.n == 8

    def test_missing_token_without_drop_is_a_parse_error(self):
        with self.assertRaises(ParseError) as ctx:
            load_csv(datafile("toy.csv"), toy_schema())
        assert ctx.exception.row == 5
        assert ctx.exception.column == "income"

    def test_non_numeric_location(self):
        schema = EncodingSpec({"age": ColumnRule.passthrough(), "color": ColumnRule.one_hot()})
        with self.assertRaises(ParseError) as ctx:
            load_csv(datafile("bad_numeric.csv"), schema)
        assert ctx.exception.row == 4
        assert ctx.exception.column == "age"
        assert ctx.exception.details() == {"row": 4, "column": "age"}

    def test_unknown_binary_level(self):
        schema = EncodingSpec({"smoker": ColumnRule.binary_map({"yes": 1})})
        with self.assertRaises(ParseError) as ctx:
            load_csv(datafile("toy.csv"), schema)
        assert ctx.exception.row == 3
        assert ctx.exception.column == "smoker"

    def test_schema_column_absent_from_header(self):
        with self.assertRaises(ParseError):
            load_csv(datafile("toy.csv"), EncodingSpec({"height": ColumnRule.passthrough()}))

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_csv(datafile("toy.csv") + ".absent", toy_schema())


class TestDataset(unittest.TestCase):

    def make(self):
        frame = pd.DataFrame({"x": [1.0, 2.0, 3.0, 4.0], "c": ["b", "a", 3, "a"]})
        return Dataset.from_frame(frame, {"x": ColumnKind.numeric, "c": ColumnKind.categorical})

    def test_levels_sort_numbers_first(self):
        ds = self.make()
        assert ds.levels("c") == (3, "a", "b")

    def test_subset_keeps_levels(self):
        ds = self.make()
        sub = ds.subset([1, 3])
        assert sub.n == 2
        assert sub.levels("c") == ds.levels("c")
        assert list(sub.values("x")) == [2.0, 4.0]

    def test_rejects_single_row(self):
        with self.assertRaises(DegenerateInputError):
            Dataset.from_frame(pd.DataFrame({"x": [1.0]}), {"x": ColumnKind.numeric})


class TestSplits(unittest.TestCase):

    def test_folds_partition_rows(self):
        folds = split_folds(10, 3, seed=4)
        tests = np.concatenate([test for _, test in folds])
        assert sorted(tests.tolist()) == list(range(10))
        assert sorted(len(test) for _, test in folds) == [3, 3, 4]
        for train, test in folds:
            assert not set(train) & set(test)
            assert len(train) + len(test) == 10

    def test_folds_are_deterministic(self):
        a = split_folds(25, 5, seed=1)
        b = split_folds(25, 5, seed=1)
        for (tr_a, te_a), (tr_b, te_b) in zip(a, b):
            assert np.array_equal(tr_a, tr_b)
            assert np.array_equal(te_a, te_b)

    def test_fold_count_bounds(self):
        with self.assertRaises(ConfigurationError):
            split_folds(3, 4)
        with self.assertRaises(ConfigurationError):
            split_folds(10, 1)

    def test_train_test_split(self):
        train, test = train_test_split(10, 0.7, seed=2)
        assert len(train) == 7
        assert len(test) == 3
        assert sorted(np.concatenate([train, test]).tolist()) == list(range(10))

    def test_train_fraction_bounds(self):
        with self.assertRaises(ConfigurationError):
            train_test_split(10, 1.0)
        with self.assertRaises(ConfigurationError):
            train_test_split(4, 0.9)


if __name__ == "__main__":
    unittest.main()
