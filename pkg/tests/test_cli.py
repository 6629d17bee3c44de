import csv
import io
import json
import math

import numpy as np
import pytest
import yaml

from dientropy.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, EXIT_SOLVER, main
from dientropy.oracle import MeasurementAngleSet, honest_statistics

ANGLES = MeasurementAngleSet((0.0, math.pi / 2), (math.pi / 4, -math.pi / 4))


def _config(tmp_path, **cfg):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def _without_wall_time(text):
    return [{k: v for k, v in r.items() if k != "wall_time"} for r in _rows(text)]


def _table_json(tmp_path, table, name="d.json"):
    obj = {"na": 2, "nb": 2, "nx": 2, "ny": 2, "mode": "probs", "table": table.transpose(2, 3, 0, 1).tolist()}
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def test_print_config_lists_defaults(tmp_path, capsys):
    assert main(["--print-config"]) == EXIT_OK
    cfg = yaml.safe_load(capsys.readouterr().out)
    assert cfg["task"] == "one_sided_vn" and cfg["mode"] == "per_node"
    assert cfg["grid"]["nodes"] == 8 and cfg["level"] == 2 and cfg["extras"] == ["MNP"]
    assert cfg["constraints"]["steps"] == 13


def test_flags_override_config(tmp_path, capsys):
    path = _config(tmp_path, grid={"nodes": 4}, level=1)
    assert main(["--config", path, "--nodes", "6", "--level", "2", "--mode", "joint", "--print-config"]) == EXIT_OK
    cfg = yaml.safe_load(capsys.readouterr().out)
    assert cfg["grid"]["nodes"] == 6 and cfg["level"] == 2 and cfg["mode"] == "joint"


def test_all_config_errors_are_listed(tmp_path, capsys):
    path = _config(
        tmp_path,
        scenario="2222",
        key_input=5,
        constraints={"kind": "sweep", "functional": "chsh", "lo": 1.0, "hi": 9.0, "steps": 3},
        grid={"nodes": 4, "lam": 2.0},
    )
    assert main(["--config", path]) == EXIT_CONFIG
    err = capsys.readouterr().err
    for needle in ("key_input", "constraints.hi", "grid.lam"):
        assert needle in err
    assert "constraints.lo" not in err


def test_schema_errors_exit_two(tmp_path, capsys):
    assert main(["--config", _config(tmp_path, colour="blue", level=0)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "colour" in err and "level" in err


def test_missing_config_file(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "absent.yaml")]) == EXIT_CONFIG


def test_bad_mode_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["--mode", "sharded"])
    assert exc.value.code == 2


def test_chsh_sweep_is_monotone_and_reproducible(tmp_path, capsys):
    path = _config(tmp_path, constraints={"kind": "sweep", "functional": "chsh", "steps": 13}, grid={"nodes": 8})
    assert main(["--config", path, "--workers", "4"]) == EXIT_OK
    first = capsys.readouterr().out
    rows = _rows(first)
    assert [r["parameter"] for r in rows] == [f"{v:.12g}" for v in np.linspace(2, 2 * math.sqrt(2), 13)]
    assert list(rows[0]) == ["parameter", "bound", "status", "matrix_size", "wall_time"]
    bounds = [float(r["bound"]) for r in rows]
    assert all(b2 >= b1 - 1e-6 for b1, b2 in zip(bounds, bounds[1:]))
    assert bounds[-1] > 0.95 and abs(bounds[0]) < 1e-3
    assert main(["--config", path, "--workers", "1"]) == EXIT_OK
    assert _without_wall_time(capsys.readouterr().out) == _without_wall_time(first)


def test_output_file(tmp_path):
    out = tmp_path / "o.csv"
    path = _config(tmp_path, constraints={"kind": "sweep", "lo": 2.4, "hi": 2.4, "steps": 1}, grid={"nodes": 3})
    assert main(["--config", path, "--output", str(out)]) == EXIT_OK
    (row,) = _rows(out.read_text())
    assert row["status"] in ("optimal", "near_optimal") and float(row["bound"]) > 0.2


def test_export_is_deterministic(tmp_path):
    path = _config(tmp_path, constraints={"kind": "sweep", "lo": 2.5, "hi": 2.7, "steps": 2}, grid={"nodes": 3})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--config", path, "--export-sdpa", str(a)]) == EXIT_OK
    assert main(["--config", path, "--export-sdpa", str(b)]) == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert names == [f"point{i:03d}_node{k:02d}.dat-s" for i in range(2) for k in range(4)]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_signalling_file_is_projected(tmp_path, capsys, caplog):
    t = honest_statistics(("werner", 0.95), ANGLES).table.copy()
    t[0, 0, 0, 0] += 0.004
    t /= t.sum(axis=(0, 1))
    path = _config(tmp_path, constraints={"kind": "distribution", "path": _table_json(tmp_path, t)}, grid={"nodes": 3})
    with caplog.at_level("INFO", logger="dientropy"):
        assert main(["--config", path]) == EXIT_OK
    assert "perturbation l1" in caplog.text
    (row,) = _rows(capsys.readouterr().out)
    assert float(row["bound"]) > 0.3


def test_infeasible_statistics_exit_four(tmp_path, capsys):
    t = np.zeros((2, 2, 2, 2))
    for a in range(2):
        for b in range(2):
            for x in range(2):
                for y in range(2):
                    t[a, b, x, y] = 0.5 if (a ^ b) == (x & y) else 0.0
    path = _config(tmp_path, level=1, constraints={"kind": "distribution", "path": _table_json(tmp_path, t)}, grid={"nodes": 2})
    assert main(["--config", path]) == EXIT_INFEASIBLE
    assert _rows(capsys.readouterr().out)[0]["status"] == "infeasible"


def test_solver_failure_exit_three(tmp_path, capsys):
    path = _config(tmp_path, constraints={"kind": "sweep", "lo": 2.5, "hi": 2.5, "steps": 1},
                   grid={"nodes": 2}, solver={"max_iterations": 2})
    assert main(["--config", path]) == EXIT_SOLVER
    row = _rows(capsys.readouterr().out)[0]
    assert row["status"] == "solver_error" and row["bound"] == ""


def test_max_bell_task(tmp_path, capsys):
    path = _config(tmp_path, task="max_bell", level=1)
    assert main(["--config", path]) == EXIT_OK
    (row,) = _rows(capsys.readouterr().out)
    assert float(row["bound"]) == pytest.approx(2 * math.sqrt(2), abs=1e-6)
    assert row["matrix_size"] == "5"


def test_honest_noise_sweep(tmp_path, capsys):
    path = _config(tmp_path, constraints={"kind": "honest", "lo": 1.0, "hi": 0.9, "steps": 2, "rows": "chsh"},
                   grid={"nodes": 4})
    assert main(["--config", path]) == EXIT_OK
    b = [float(r["bound"]) for r in _rows(capsys.readouterr().out)]
    assert b[0] > b[1] > 0
