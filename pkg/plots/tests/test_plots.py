import subprocess
import sys

import pytest

from idnc_plots import (
    EmptySelectionError,
    FigureSpec,
    MissingColumnError,
    PRESETS,
    build_figure,
    load_rows,
    render_figure,
)

SCHEMA = (
    "policy,M,N,P,iterations,mean_ct,stderr_ct,mean_sdd,stderr_sdd,"
    "mean_dd_per_user,stderr_dd_per_user,aborted_frames"
)


def write_csv(path, rows, header=SCHEMA):
    lines = [header]
    for r in rows:
        lines.append(",".join(str(x) for x in r))
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def curve_lines(ax):
    # one ErrorbarContainer per plotted policy; ax.lines also holds caps
    return [c.lines[0] for c in ax.containers]


def synthetic_rows(policies=("pct", "minct", "sdd"), xs=(20, 40, 60),
                   ps=(0.25, 0.5)):
    rows = []
    for k, policy in enumerate(policies):
        for x in xs:
            for p in ps:
                ct = 100.0 + 10 * k + x / 10 + 50 * p
                sdd = 30.0 + 5 * k + x / 20 + 20 * p
                rows.append([policy, x, 60, p, 5, ct, 1.0, sdd, 0.5,
                             sdd / x, 0.5 / x, 0])
    return rows


@pytest.fixture()
def sample_csv(tmp_path):
    return write_csv(tmp_path / "sweep.csv", synthetic_rows())


class TestFigureSpec:
    def test_rejects_unknown_axis_and_metric(self):
        with pytest.raises(ValueError):
            FigureSpec(inputs=("a.csv",), x="Q", metrics=("mean_ct",),
                       out="f.svg")
        with pytest.raises(ValueError):
            FigureSpec(inputs=("a.csv",), x="M", metrics=("median_ct",),
                       out="f.svg")

    def test_rejects_empty_inputs_and_split_on_x(self):
        with pytest.raises(ValueError):
            FigureSpec(inputs=(), x="M", metrics=("mean_ct",), out="f.svg")
        with pytest.raises(ValueError):
            FigureSpec(inputs=("a.csv",), x="P", metrics=("mean_ct",),
                       out="f.svg", split="P")

    def test_referenced_columns_cover_metric_and_stderr(self):
        spec = FigureSpec(inputs=("a.csv",), x="M",
                          metrics=("mean_ct", "mean_sdd"), out="f.svg",
                          split="P")
        cols = spec.referenced_columns
        for c in ("policy", "M", "P", "mean_ct", "stderr_ct", "mean_sdd",
                  "stderr_sdd"):
            assert c in cols


class TestLoadRows:
    def test_missing_column_error_names_it(self, tmp_path):
        header = SCHEMA.replace("mean_ct,", "")
        p = write_csv(tmp_path / "bad.csv",
                      [["pct", 20, 60, 0.25, 5, 1.0, 30, 0.5, 1.5, 0.1, 0]],
                      header=header)
        with pytest.raises(MissingColumnError, match="mean_ct"):
            load_rows((p,), ("policy", "M", "mean_ct"))

    def test_empty_csv_error_names_the_file(self, tmp_path):
        p = write_csv(tmp_path / "empty.csv", [])
        with pytest.raises(EmptySelectionError, match="empty.csv"):
            load_rows((p,), ("policy",))

    def test_concatenates_multiple_inputs(self, tmp_path):
        a = write_csv(tmp_path / "a.csv", synthetic_rows(policies=("pct",)))
        b = write_csv(tmp_path / "b.csv", synthetic_rows(policies=("sdd",)))
        rows = load_rows((a, b), ("policy",))
        assert {r["policy"] for r in rows} == {"pct", "sdd"}


class TestBuildFigure:
    def test_split_panels_one_curve_per_policy(self, sample_csv, tmp_path):
        spec = FigureSpec(inputs=(sample_csv,), out=str(tmp_path / "f.svg"),
                          **PRESETS["fig1"])
        fig = build_figure(spec)
        assert len(fig.axes) == 2  # one panel per erasure probability
        for ax in fig.axes:
            assert len(curve_lines(ax)) == 3
            labels = [t.get_text() for t in ax.get_legend().get_texts()]
            assert labels == ["P-CT", "Min-CT", "SDD"]
        assert fig.axes[0].get_title().startswith("(a)")
        assert fig.axes[1].get_title().startswith("(b)")

    def test_two_metric_panels_without_split(self, tmp_path):
        csvp = write_csv(
            tmp_path / "fig5.csv",
            synthetic_rows(xs=(30,), ps=(0.05, 0.1, 0.15, 0.2)),
        )
        spec = FigureSpec(inputs=(csvp,), out=str(tmp_path / "f.svg"),
                          **PRESETS["fig5"])
        fig = build_figure(spec)
        assert len(fig.axes) == 2
        assert "completion time" in fig.axes[0].get_ylabel()
        assert "decoding delay" in fig.axes[1].get_ylabel()
        # ten-point curves collapse to the four synthetic erasure values
        for ax in fig.axes:
            for line in curve_lines(ax):
                assert len(line.get_xdata()) == 4

    def test_curve_count_tracks_distinct_policies(self, tmp_path):
        csvp = write_csv(tmp_path / "two.csv",
                         synthetic_rows(policies=("pct", "sdd")))
        spec = FigureSpec(inputs=(csvp,), out=str(tmp_path / "f.svg"),
                          **PRESETS["fig1"])
        fig = build_figure(spec)
        assert all(len(curve_lines(ax)) == 2 for ax in fig.axes)

    def test_unknown_policy_still_plots_with_its_raw_name(self, tmp_path):
        csvp = write_csv(tmp_path / "odd.csv",
                         synthetic_rows(policies=("pct", "custom")))
        spec = FigureSpec(inputs=(csvp,), out=str(tmp_path / "f.svg"),
                          **PRESETS["fig1"])
        fig = build_figure(spec)
        labels = [t.get_text()
                  for t in fig.axes[0].get_legend().get_texts()]
        assert labels == ["P-CT", "custom"]

    def test_missing_metric_column_is_a_schema_error(self, tmp_path):
        header = SCHEMA.replace("mean_ct,", "")
        rows = [["pct", 20, 60, 0.25, 5, 1.0, 30, 0.5, 1.5, 0.1, 0]]
        csvp = write_csv(tmp_path / "bad.csv", rows, header=header)
        spec = FigureSpec(inputs=(csvp,), out=str(tmp_path / "f.svg"),
                          **PRESETS["fig1"])
        with pytest.raises(MissingColumnError, match="mean_ct"):
            build_figure(spec)


class TestRenderFigure:
    def test_writes_svg_and_leaves_input_untouched(self, sample_csv, tmp_path):
        before = open(sample_csv, "rb").read()
        out = tmp_path / "fig1.svg"
        got = render_figure(FigureSpec(inputs=(sample_csv,), out=str(out),
                                       **PRESETS["fig1"]))
        assert got == str(out)
        data = out.read_bytes()
        assert data.startswith(b"<?xml") and b"</svg>" in data
        assert open(sample_csv, "rb").read() == before

    def test_identical_inputs_render_identical_bytes(self, sample_csv, tmp_path):
        a = tmp_path / "a.svg"
        b = tmp_path / "b.svg"
        for out in (a, b):
            render_figure(FigureSpec(inputs=(sample_csv,), out=str(out),
                                     **PRESETS["fig2"]))
        assert a.read_bytes() == b.read_bytes()

    def test_png_output_supported(self, sample_csv, tmp_path):
        out = tmp_path / "fig1.png"
        render_figure(FigureSpec(inputs=(sample_csv,), out=str(out),
                                 **PRESETS["fig1"]))
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestCli:
    def run(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "idnc_plots.cli", *args],
            capture_output=True, text=True,
        )

    def test_renders_a_preset(self, sample_csv, tmp_path):
        out = tmp_path / "f.svg"
        proc = self.run("--input", sample_csv, "--preset", "fig1",
                        "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        assert out.exists()
        assert str(out) in proc.stdout

    def test_schema_error_exits_nonzero_and_names_column(self, tmp_path):
        header = SCHEMA.replace("mean_sdd,", "")
        csvp = write_csv(tmp_path / "bad.csv",
                         [["pct", 20, 60, 0.25, 5, 1.0, 1.0, 0.5, 1.5, 0.1, 0]],
                         header=header)
        proc = self.run("--input", csvp, "--preset", "fig2",
                        "--out", str(tmp_path / "f.svg"))
        assert proc.returncode == 1
        assert "mean_sdd" in proc.stderr

    def test_missing_input_file_exits_nonzero(self, tmp_path):
        proc = self.run("--input", str(tmp_path / "nope.csv"),
                        "--preset", "fig1",
                        "--out", str(tmp_path / "f.svg"))
        assert proc.returncode == 1
        assert "nope.csv" in proc.stderr

    def test_unknown_preset_is_a_usage_error(self, sample_csv):
        proc = self.run("--input", sample_csv, "--preset", "fig9")
        assert proc.returncode == 2
