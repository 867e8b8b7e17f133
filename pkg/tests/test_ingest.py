import datetime as dt

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ofsulr.errors import DataError
from ofsulr.ingest import (
    Column,
    ColumnKind,
    Table,
    apply_recipe,
    combine_datetime,
    decompose_geolocation,
    drop_columns,
    drop_null_rows,
    drop_sparse_columns,
    infer_kind,
    load_csv,
    load_uci_diabetes_dir,
    parse_geolocation,
    posix_time,
    profile,
    save_csv,
    table_from_records,
)


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_csv_kinds(tmp_path):
    t = load_csv(write(tmp_path, "a,b\n1,x\n2,y\n"))
    assert t.row_count == 2
    assert t.column("a").kind is ColumnKind.INTEGER
    assert t.column("b").kind is ColumnKind.CATEGORICAL
    assert t.column("a").cells == (1, 2)


def test_mixed_kind():
    assert infer_kind([3, 4.5, "abc"]) is ColumnKind.MIXED


def test_int_and_real_is_real(tmp_path):
    t = load_csv(write(tmp_path, "a\n1\n2.5\n"))
    assert t.column("a").kind is ColumnKind.REAL
    assert t.column("a").cells == (1.0, 2.5)


def test_sentinels_become_missing(tmp_path):
    t = load_csv(write(tmp_path, "a,b\n1,NA\n,nan\n3,z\n"))
    assert t.column("a").cells == (1, None, 3)
    assert t.column("b").cells == (None, None, "z")


def test_ragged_row_names_index(tmp_path):
    with pytest.raises(DataError, match="row 1"):
        load_csv(write(tmp_path, "a,b\n1,2\n3\n"))


def test_unreadable_file(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "missing.csv")


def test_kind_hint_coerces_and_invalidates(tmp_path):
    t = load_csv(write(tmp_path, "code\n58\nabc\n60\n"), kind_hints={"code": "integer"})
    assert t.column("code").kind is ColumnKind.INTEGER
    assert t.column("code").cells == (58, None, 60)


def test_profile_counts():
    t = Table.from_columns("t", [Column("a", ColumnKind.INTEGER, (1, None, 3, 4))])
    (p,) = profile(t)
    assert (p.null_count, p.not_null_count, p.valid_pct) == (1, 3, 75.0)


def test_profile_empty_table_is_fully_valid():
    t = Table.from_columns("t", [Column("a", ColumnKind.INTEGER, ())], 0)
    assert profile(t)[0].valid_pct == 100.0


def test_table_rejects_ragged_and_duplicate_columns():
    with pytest.raises(DataError):
        Table("t", (Column("a", ColumnKind.INTEGER, (1,)), Column("b", ColumnKind.INTEGER, ())), 1)
    with pytest.raises(DataError):
        Table("t", (Column("a", ColumnKind.INTEGER, (1,)), Column("a", ColumnKind.INTEGER, (2,))), 1)


def test_drop_columns():
    t = table_from_records("t", ["a", "b", "c"], [["1", "2", "3"]])
    assert drop_columns(t, []) == t
    out = drop_columns(t, ["b"])
    assert out.column_names == ["a", "c"]
    assert "b" not in [p.name for p in profile(out)]
    with pytest.raises(DataError):
        drop_columns(t, ["zz"])


def test_drop_sparse_columns():
    t = table_from_records("t", ["a", "b"], [["1", ""], ["2", ""], ["3", "x"]])
    assert drop_sparse_columns(t).column_names == ["a"]


def test_drop_null_rows_keeps_order_and_subset():
    t = table_from_records("t", ["a", "b"], [["1", ""], ["2", "y"], ["", "z"], ["4", "w"]])
    assert drop_null_rows(t).column("a").cells == (2, 4)
    assert drop_null_rows(t, ["a"]).column("a").cells == (1, 2, 4)
    with pytest.raises(DataError):
        drop_null_rows(t, ["nope"])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["", "1", "x", "2.5"]), min_size=2, max_size=2), max_size=12))
def test_drop_null_rows_idempotent(rows):
    t = table_from_records("t", ["a", "b"], rows)
    once = drop_null_rows(t)
    assert drop_null_rows(once) == once
    for p in profile(t):
        assert p.null_count + p.not_null_count == t.row_count


@pytest.mark.parametrize(
    "cell,expected",
    [("(36.21, -86.78)", (36.21, -86.78)), ("POINT (-86.78 36.21)", (36.21, -86.78)), ("garbage", None), (None, None)],
)
def test_parse_geolocation(cell, expected):
    assert parse_geolocation(cell) == expected


def test_decompose_geolocation_position_and_rows():
    t = table_from_records("t", ["id", "geo", "z"], [["1", "(1.5, 2.5)", "a"], ["2", "bad", "b"]])
    out = decompose_geolocation(t, "geo")
    assert out.column_names == ["id", "Geo_lat", "Geo_lon", "z"]
    assert out.column("Geo_lat").cells == (1.5, None)
    assert out.column("Geo_lon").cells == (2.5, None)
    assert out.row_count == t.row_count


def calendar_oracle(date, time):
    m, d, y = (int(v) for v in date.split("-"))
    hh, mm = (int(v) for v in time.split(":"))
    delta = dt.date(y, m, d) - dt.date(1970, 1, 1)
    return delta.days * 86400 + hh * 3600 + mm * 60


def test_posix_time_examples():
    assert posix_time("01-01-1970", "00:00") == 0
    assert posix_time("01-02-1970", "01:00") == 90000
    assert posix_time("13-45-1991", "00:00") is None
    assert posix_time("04-21-1991", "25:00") is None


@settings(max_examples=100, deadline=None)
@given(st.dates(min_value=dt.date(1900, 1, 1), max_value=dt.date(2100, 12, 31)),
       st.integers(0, 23), st.integers(0, 59))
def test_posix_time_matches_calendar(day, hh, mm):
    date, time = day.strftime("%m-%d-%Y"), f"{hh:02d}:{mm:02d}"
    assert posix_time(date, time) == calendar_oracle(date, time)


def test_combine_datetime():
    t = table_from_records("t", ["Date", "Time", "v"], [["01-02-1970", "01:00", "5"], ["13-45-1991", "01:00", "6"]],
                           kind_hints={"Date": "text", "Time": "text"})
    out = combine_datetime(t, "Date", "Time")
    assert out.column_names == ["timestamp", "v"]
    assert out.column("timestamp").cells == (90000, None)
    assert out.column("timestamp").kind is ColumnKind.TIMESTAMP


def test_csv_round_trip(tmp_path):
    t = table_from_records("t", ["i", "r", "c", "m"],
                           [["1", "0.1", "x", "3"], ["", "1e-300", "y", "q"], ["3", "2.5", "", "4.5"]])
    p = tmp_path / "rt.csv"
    save_csv(t, p)
    back = load_csv(p, name="t")
    assert back == t


def test_uci_diabetes_loader_and_recipe(tmp_path):
    (tmp_path / "data-01").write_text(
        "04-21-1991\t9:09\t58\t100\n04-21-1991\t9:09\t33\t009\n"
        "04-21-1991\t17:08\t0Hi\t050\n06-31-1991\t8:00\t62\t100\n04-22-1991\t7:35\t58\t216\n"
    )
    (tmp_path / "README").write_text("not data")
    raw = load_uci_diabetes_dir(tmp_path)
    assert raw.column_names == ["Date", "Time", "Code", "Value"]
    assert raw.row_count == 5
    res = apply_recipe(raw, "uci-diabetes")
    # invalid code and impossible date are dropped
    assert res.table.row_count == 3
    assert res.table.column_names == ["timestamp", "Code", "Value"]
    assert res.table.column("Value").cells == (100.0, 9.0, 216.0)


def test_us_cdi_recipe_shape():
    header = ["YearStart", "YearEnd", "LocationAbbr", "LocationDesc", "DataSource", "Topic", "Question",
              "DataValueUnit", "DataValueType", "DataValue", "DataValueAlt", "LowConfidenceLimit",
              "HighConfidenceLimit", "StratificationCategory1", "Stratification1", "GeoLocation",
              "LocationID", "TopicID", "QuestionID", "DataValueTypeID", "StratificationCategoryID1",
              "StratificationID1", "Response"]
    from ofsulr.ingest import US_CDI_KEEP

    row = {h: "v" for h in header}
    row.update(YearStart="2016", YearEnd="2016", DataValue="12.5", DataValueAlt="12.5",
               LowConfidenceLimit="10", HighConfidenceLimit="15", GeoLocation="POINT (-86.78 36.21)",
               LocationID="1")
    bad = dict(row, GeoLocation="")
    t = table_from_records("cdi", header, [[row[h] for h in header], [bad[h] for h in header]])
    res = apply_recipe(t, "us-cdi")
    assert res.table.row_count == 1
    assert len(res.table.columns) == len(US_CDI_KEEP) + 1
    assert "Geo_lat" in res.table and "Geo_lon" in res.table
    assert len(res.cluster_features) == 5


def test_unknown_recipe():
    t = table_from_records("t", ["a"], [["1"]])
    with pytest.raises(DataError):
        apply_recipe(t, "nope")
