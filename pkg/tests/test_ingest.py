import numpy as np
import pytest

from deconfound import (
    DatasetManifest,
    ValidationError,
    load_csv,
    read_panel_csv,
    write_panel_csv,
)


def write_dataset(path, rows, header="date,temp,wind,hum,rain,target"):
    lines = [header] + rows
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def manifest(path, **overrides):
    base = dict(
        path=str(path),
        target="target",
        covariates=("temp", "wind"),
        treatments=("hum", "rain"),
        time_column="date",
    )
    base.update(overrides)
    return DatasetManifest(**base)


class TestManifestValidation:
    def test_target_must_not_overlap_roles(self, tmp_path):
        with pytest.raises(ValidationError, match="target"):
            manifest(tmp_path / "d.csv", covariates=("target", "wind"))

    def test_needs_columns(self, tmp_path):
        with pytest.raises(ValidationError):
            manifest(tmp_path / "d.csv", covariates=())

    def test_dict_round_trip(self, tmp_path):
        m = manifest(tmp_path / "d.csv")
        assert DatasetManifest.from_dict(m.to_dict()) == m

    def test_unknown_field_rejected(self):
        with pytest.raises(ValidationError):
            DatasetManifest.from_dict({"path": "x", "target": "y", "oops": 1})


class TestLoadCsv:
    def test_three_row_load(self, tmp_path):
        path = tmp_path / "data.csv"
        write_dataset(
            path,
            [
                "2020-01-01,1.5,2.5,3.5,4.5,9.0",
                "2020-01-02,1.6,2.6,3.6,4.6,9.1",
                "2020-01-03,1.7,2.7,3.7,4.7,9.2",
            ],
        )
        panel = load_csv(manifest(path))
        assert len(panel) == 3
        assert panel.z_true is None
        assert np.array_equal(panel.x, [[1.5, 2.5], [1.6, 2.6], [1.7, 2.7]])
        assert np.array_equal(panel.a, [[3.5, 4.5], [3.6, 4.6], [3.7, 4.7]])
        assert np.array_equal(panel.y, [9.0, 9.1, 9.2])

    def test_blank_cell_cites_row_and_column(self, tmp_path):
        path = tmp_path / "data.csv"
        rows = [f"d{i},1,2,3,4,5" for i in range(10)]
        rows[7] = "d7,1,2,,4,5"
        write_dataset(path, rows)
        with pytest.raises(ValidationError, match=r"row 7.*'hum'"):
            load_csv(manifest(path))

    def test_absent_column_named(self, tmp_path):
        path = tmp_path / "data.csv"
        write_dataset(path, ["d0,1,2,3,4,5"])
        with pytest.raises(ValidationError, match="column a_9 not found"):
            load_csv(manifest(path, treatments=("hum", "a_9")))

    def test_non_numeric_cell_cited(self, tmp_path):
        path = tmp_path / "data.csv"
        write_dataset(path, ["d0,1,2,3,4,5", "d1,1,n/a,3,4,5"])
        with pytest.raises(ValidationError, match=r"row 1.*'n/a'.*'wind'"):
            load_csv(manifest(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="not found"):
            load_csv(manifest(tmp_path / "nope.csv"))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("")
        with pytest.raises(ValidationError, match="empty"):
            load_csv(manifest(path))

    def test_header_only_file(self, tmp_path):
        path = tmp_path / "data.csv"
        write_dataset(path, [])
        with pytest.raises(ValidationError, match="no rows"):
            load_csv(manifest(path))

    def test_extra_columns_ignored(self, tmp_path):
        path = tmp_path / "data.csv"
        write_dataset(
            path,
            ["d0,1,2,3,4,5,junk", "d1,1,2,3,4,5,junk"],
            header="date,temp,wind,hum,rain,target,notes",
        )
        panel = load_csv(manifest(path))
        assert len(panel) == 2

    def test_round_trip_through_panel_csv(self, tmp_path):
        path = tmp_path / "data.csv"
        rng = np.random.default_rng(0)
        rows = []
        for i in range(5):
            vals = rng.normal(size=5)
            rows.append(f"d{i}," + ",".join(f"{v:.17g}" for v in vals))
        write_dataset(path, rows)
        panel = load_csv(manifest(path))
        out = tmp_path / "panel.csv"
        write_panel_csv(panel, out)
        back = read_panel_csv(out)
        assert np.array_equal(back.x, panel.x)
        assert np.array_equal(back.a, panel.a)
        assert np.array_equal(back.y, panel.y)
