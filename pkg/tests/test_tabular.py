import io

import pytest

from pipeforge.tabular import (
    Field,
    classify_value,
    iter_records,
    scan_table,
    unify_dtypes,
)


def _records(text, delimiter=","):
    return [
        [(f.value, f.quoted) for f in rec]
        for rec in iter_records(io.StringIO(text), delimiter)
    ]


class TestTokenizer:
    def test_plain_rows(self):
        assert _records("a,b\n1,2\n") == [[("a", False), ("b", False)], [("1", False), ("2", False)]]

    def test_quoted_delimiter(self):
        assert _records('x,"a,b"\n') == [[("x", False), ("a,b", True)]]

    def test_escaped_quote(self):
        assert _records('"he said ""hi""",2\n') == [[('he said "hi"', True), ("2", False)]]

    def test_quoted_newline_does_not_split_record(self):
        rows = _records('"line1\nline2",x\n')
        assert rows == [[("line1\nline2", True), ("x", False)]]

    def test_crlf(self):
        assert _records("a,b\r\n1,2\r\n") == [
            [("a", False), ("b", False)],
            [("1", False), ("2", False)],
        ]

    def test_missing_trailing_newline(self):
        assert _records("a,b\n1,2") == [[("a", False), ("b", False)], [("1", False), ("2", False)]]

    def test_tab_delimiter(self):
        assert _records("a\tb\n1\t2\n", delimiter="\t") == [
            [("a", False), ("b", False)],
            [("1", False), ("2", False)],
        ]

    def test_empty_fields(self):
        assert _records("a,,c\n") == [[("a", False), ("", False), ("c", False)]]


class TestClassify:
    @pytest.mark.parametrize(
        "value,expected",
        [
            ("1", "int"),
            ("-42", "int"),
            ("3.5", "real"),
            ("1e-3", "real"),
            (".5", "real"),
            ("true", "bool"),
            ("False", "bool"),
            ("2024-01-31", "datetime"),
            ("2024-01-31T09:30:00", "datetime"),
            ("hello", "text"),
        ],
    )
    def test_ladder(self, value, expected):
        assert classify_value(Field(value, quoted=False)) == expected

    def test_quoted_digits_are_text(self):
        assert classify_value(Field("123", quoted=True)) == "text"

    @pytest.mark.parametrize("token", ["", "NA", "NaN", "null", "None", "n/a"])
    def test_null_tokens(self, token):
        assert classify_value(Field(token, quoted=False)) is None

    def test_quoted_na_is_literal_text(self):
        assert classify_value(Field("NA", quoted=True)) == "text"

    def test_unify(self):
        assert unify_dtypes({"int"}) == "int"
        assert unify_dtypes({"int", "real"}) == "real"
        assert unify_dtypes({"bool"}) == "bool"
        assert unify_dtypes({"int", "text"}) == "text"
        assert unify_dtypes(set()) == "text"


class TestScan:
    def test_stats_on_column_with_missing_value(self, tmp_path):
        # [1, 2, missing, 4] -> null_rate 0.25, mean 7/3
        path = tmp_path / "t.csv"
        path.write_text("v\n1\n2\n\n4\n")
        scan = scan_table(path, sample_rows=100)
        acc = scan.accumulators[0]
        assert scan.row_count == 4
        assert acc.nulls == 1
        assert acc.mean() == pytest.approx(7 / 3)
        assert acc.minimum == 1.0 and acc.maximum == 4.0

    def test_exact_row_count_beyond_sample(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("v\n" + "\n".join(str(i) for i in range(50)) + "\n")
        scan = scan_table(path, sample_rows=10)
        assert scan.row_count == 50
        assert scan.sampled_rows == 10
        assert len(scan.accumulators[0].distinct) == 10

    def test_row_observer_sees_at_most_sample_rows(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("v\n" + "\n".join(str(i) for i in range(50)) + "\n")
        seen = []
        scan_table(path, sample_rows=7, row_observer=seen.append)
        assert len(seen) == 7

    def test_malformed_rows_counted_not_fatal(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,b\n1,2\n1,2,3\n4,5\n")
        scan = scan_table(path, sample_rows=100)
        assert scan.malformed_rows == 1
        assert scan.row_count == 3  # malformed row still counts toward the total

    def test_empty_file(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("")
        scan = scan_table(path, sample_rows=10)
        assert scan.header == [] and scan.row_count == 0

    def test_header_only(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,b\n")
        scan = scan_table(path, sample_rows=10)
        assert scan.header == ["a", "b"]
        assert scan.row_count == 0

    def test_quoted_column_classified_text(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text('code\n"01"\n"02"\n')
        scan = scan_table(path, sample_rows=10)
        assert scan.accumulators[0].dtype == "text"
