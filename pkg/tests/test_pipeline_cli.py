import dataclasses
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from qflab import cli, curves, flatsurf, mesh, pipeline, svg
from qflab.errors import ConfigError, UnknownKind

ROOT = Path(__file__).parents[1]
SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def bundles(tmp_path_factory):
    out = []
    for k in range(2):
        cfg = pipeline.PipelineConfig(out=tmp_path_factory.mktemp(f"run{k}"), seed=7)
        out.append(pipeline.run_pipeline(cfg))
    return out


def test_config_rejects_bad_grids():
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig(s_values=(1e-3, 2e-3)).validate()
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig(s_values=(1e-3,)).validate()
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig(s_values=(1e-3, -1e-3)).validate()
    with pytest.raises(ConfigError):
        pipeline.PipelineConfig(h_target=0.0).validate()
    assert pipeline.PipelineConfig().s_grid == (8e-3, 4e-3, 2e-3, 1e-3)


def test_bundle_passes(bundles):
    b = bundles[0]
    bad = [r for r in b.rows if not r.ok]
    assert not bad, bad
    assert b.exit_code == 0
    assert any(r.status == "recorded" for r in b.rows)


def test_bundle_is_reproducible(bundles):
    a, b = bundles
    assert set(a.files) == set(b.files)
    for name in a.files:
        assert (a.out / name).read_bytes() == (b.out / name).read_bytes(), name


def test_bundle_stays_in_out(bundles):
    b = bundles[0]
    written = {p.name for p in b.out.iterdir()}
    assert written == set(b.files)
    assert {"checks.tsv", "first_order.tsv", "foliation.tsv", "halfpipe.txt", "surface.svg"} <= written


def test_corrupted_gluing_fails_gauss_bonnet():
    f = flatsurf.realize(curves.l_shape())
    glue = list(f.gluings)
    glue[0] = flatsurf.Gluing(0, "right", 0, "left")
    glue[2] = flatsurf.Gluing(1, "right", 1, "left")
    broken = dataclasses.replace(f, gluings=tuple(glue))
    rows = pipeline.verify_suite(pipeline.PipelineConfig(checks=("mesh",)), broken)
    status = {r.name: r.status for r in rows}
    assert status["GaussBonnet"] == "fail"
    assert pipeline.exit_code(rows) == 1


def test_verify_is_deterministic():
    cfg = pipeline.PipelineConfig(checks=("curves", "flatsurf", "halfpipe"))
    a = pipeline.format_table(pipeline.verify_suite(cfg))
    b = pipeline.format_table(pipeline.verify_suite(cfg))
    assert a == b
    assert a.splitlines()[0].split("\t") == ["check", "stage", "value", "bound", "status"]


def test_stage_error_becomes_row(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("n = 2\nperm_h = (1 2)\nperm_v = (1 2)\n")
    rows = pipeline.verify_suite(pipeline.PipelineConfig(surface=bad, checks=("curves",)))
    assert rows[0].status == "error"


# ---------------------------------------------------------------- svg


@pytest.fixture(scope="module")
def l_flat_mod():
    return flatsurf.realize(curves.l_shape())


def test_svg_surface(l_flat_mod):
    root = ET.fromstring(svg.export_svg(l_flat_mod, "surface"))
    assert len(root.findall(f"{SVG}rect")) == 3
    arrows = [e for e in root.iter(f"{SVG}line") if e.get("class") == "gluing"]
    assert len(arrows) == 2 * len(l_flat_mod.gluings)


def test_svg_foliation(l_flat_mod):
    root = ET.fromstring(svg.export_svg(l_flat_mod, "foliation"))
    leaves = [e for e in root.iter(f"{SVG}line") if e.get("class") == "leaf"]
    per_cyl = {}
    for e in leaves:
        per_cyl.setdefault(e.get("data-cylinder"), set()).add(e.get("y1"))
    assert all(len(ys) >= svg.LEAVES_PER_CYLINDER for ys in per_cyl.values())
    assert len(per_cyl) == len(curves.cycles(l_flat_mod.source.perm_h))


def test_svg_schwarzian_field(l_path):
    text = svg.export_svg(l_path.mesh.flat, "schwarzian-field", mesh=l_path.mesh, sigma=l_path.sigma(0.1, 1))
    root = ET.fromstring(text)
    assert any(e.get("class") == "glyph" for e in root.iter(f"{SVG}line"))


def test_svg_unknown_kind(l_flat_mod):
    with pytest.raises(UnknownKind):
        svg.export_svg(l_flat_mod, "contour")


# ---------------------------------------------------------------- cli


def test_cli_realize(capsys):
    assert cli.main(["realize"]) == 0
    assert flatsurf.parse_flat_surface(capsys.readouterr().out).n_rects == 3


def test_cli_surface_file(capsys):
    assert cli.main(["realize", "--surface", str(ROOT / "surfaces" / "l_shape.txt")]) == 0
    capsys.readouterr()


def test_cli_flow(capsys):
    assert cli.main(["flow", "--s", "0.5"]) == 0
    assert cli.main(["flow", "--critical", "2"]) == 0
    assert "s_closed" in capsys.readouterr().out


def test_cli_uniformize(tmp_path):
    out = tmp_path / "metric.txt"
    assert cli.main(["uniformize", "--h-target", "0.1", "--out", str(out)]) == 0
    assert mesh.parse_metric(out.read_text()).u.size > 0


def test_cli_minsurf_and_schwarzian(capsys):
    assert cli.main(["minsurf", "--s", "0.01", "--h-target", "0.1"]) == 0
    assert cli.main(["schwarzian", "--s", "0.01", "--h-target", "0.1", "--ends", "+"]) == 0
    out = capsys.readouterr().out
    assert "# face end re im" in out


def test_cli_halfpipe(capsys):
    assert cli.main(["halfpipe", "--jet", str(ROOT / "surfaces" / "l_shape.jet")]) == 0
    assert "discarded" in capsys.readouterr().out
    assert cli.main(["halfpipe"]) == 0
    assert "verdict = consistent" in capsys.readouterr().out


def test_cli_export(tmp_path):
    for kind in svg.KINDS:
        out = tmp_path / f"{kind}.svg"
        assert cli.main(["export", "--kind", kind, "--h-target", "0.1", "--out", str(out)]) == 0
        ET.parse(out)
    assert cli.main(["export", "--kind", "nope"]) == 2


def test_cli_verify_and_errors(capsys):
    assert cli.main(["verify", "--checks", "curves,flatsurf"]) == 0
    assert cli.main(["verify", "--s0", "1e-3", "--s-ratio", "2"]) == 2
    assert "ConfigError" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["verify", "--checks", "bogus"])


def test_cli_run(tmp_path, capsys):
    assert cli.main(["run", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "checks.tsv").exists()
