import numpy as np

from mgem.cli import main

RUN_CFG = """
stream.family = rotated
stream.n_tasks = 1
stream.n_train = 40
stream.n_test = 20
stream.n_features = 3
stream.n_classes = 3
stream.noise = 0.3
stream.seed = 1
model.layer_sizes = 3,8,3
train.lr = 0.05
train.iters_per_task = 10
train.batch_size = 8
train.memory_per_task = 8
method.1.kind = single
"""

PARETO_CFG = RUN_CFG.replace("stream.n_tasks = 1", "stream.n_tasks = 2") + """
pareto.q_grid = 0.0,0.5
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_run_minimal_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path, RUN_CFG + f"output.dir = {tmp_path / 'out'}\n")
    assert main(["run", "--config", cfg]) == 0
    out = tmp_path / "out"
    summary = (out / "summary.csv").read_text().splitlines()
    assert len(summary) == 2  # header + one row
    assert summary[1].startswith("single,")
    assert (out / "rmatrix.csv").exists()


def test_run_multiple_methods_and_seeds(tmp_path):
    text = RUN_CFG + "method.2.kind = gem\nmethod.2.q = 0.1\n"
    cfg = write_cfg(tmp_path, text + f"output.dir = {tmp_path / 'out'}\n")
    assert main(["run", "--config", cfg, "--seeds", "2"]) == 0
    out = tmp_path / "out"
    assert len((out / "summary.csv").read_text().splitlines()) == 5
    assert (out / "rmatrix.csv").exists()
    for k in (2, 3, 4):
        assert (out / f"rmatrix_{k}.csv").exists()


def test_unknown_method_exits_one(tmp_path, capsys):
    cfg = write_cfg(tmp_path, RUN_CFG.replace("single", "mer"))
    assert main(["run", "--config", cfg]) == 1
    assert "kind" in capsys.readouterr().err


def test_missing_config_exits_one(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.cfg")]) == 1
    assert "cannot read config" in capsys.readouterr().err


def test_out_dir_created_if_parent_exists(tmp_path):
    cfg = write_cfg(tmp_path, RUN_CFG + f"output.dir = {tmp_path / 'fresh'}\n")
    assert main(["run", "--config", cfg]) == 0
    assert (tmp_path / "fresh" / "summary.csv").exists()


def test_out_dir_missing_parent_exits_one(tmp_path, capsys):
    cfg = write_cfg(tmp_path, RUN_CFG + f"output.dir = {tmp_path / 'a' / 'b'}\n")
    assert main(["run", "--config", cfg]) == 1
    assert "parent" in capsys.readouterr().err


def test_pareto_requires_two_tasks(tmp_path, capsys):
    cfg = write_cfg(tmp_path, RUN_CFG + f"output.dir = {tmp_path / 'o'}\n")
    assert main(["pareto", "--config", cfg]) == 1
    assert "2 tasks" in capsys.readouterr().err


def test_pareto_rows_grid_times_seeds(tmp_path):
    # 1 configured method x 2 grid q values x 2 seeds = 4 rows
    cfg = write_cfg(tmp_path, PARETO_CFG + f"output.dir = {tmp_path / 'o'}\n")
    assert main(["pareto", "--config", cfg, "--seeds", "2"]) == 0
    lines = (tmp_path / "o" / "pareto.csv").read_text().splitlines()
    assert len(lines) == 5
    body = np.array([line.split(",") for line in lines[1:]])
    assert set(body[:, 4]) == {"0", "1"}


def test_pareto_default_grid_forty_rows(tmp_path):
    # no method entries: the five default methods x eight default qs
    text = "\n".join(line for line in PARETO_CFG.splitlines()
                     if not line.startswith(("method.", "pareto.")))
    text = text.replace("train.iters_per_task = 10", "train.iters_per_task = 3")
    cfg = write_cfg(tmp_path, text + f"\noutput.dir = {tmp_path / 'o'}\n")
    assert main(["pareto", "--config", cfg]) == 0
    lines = (tmp_path / "o" / "pareto.csv").read_text().splitlines()
    assert len(lines) == 41
    assert all(np.isfinite(float(line.split(",")[5])) for line in lines[1:])
    assert all(np.isfinite(float(line.split(",")[6])) for line in lines[1:])
    # three seeds multiply the grid
    assert main(["pareto", "--config", cfg, "--seeds", "3"]) == 0
    lines = (tmp_path / "o" / "pareto.csv").read_text().splitlines()
    assert len(lines) == 121


def test_threads_flag_and_env(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, PARETO_CFG + f"output.dir = {tmp_path / 'o'}\n")
    assert main(["pareto", "--config", cfg, "--threads", "2"]) == 0
    monkeypatch.setenv("MGEM_THREADS", "2")
    assert main(["pareto", "--config", cfg]) == 0
    monkeypatch.setenv("MGEM_THREADS", "lots")
    assert main(["pareto", "--config", cfg]) == 1


def test_degraded_run_exits_two(tmp_path, monkeypatch):
    import mgem.cli as cli_mod

    original = cli_mod.run

    def degraded_run(stream, mlp, cfg, trace=False):
        result = original(stream, mlp, cfg, trace=trace)
        result.degraded = True
        return result

    monkeypatch.setattr(cli_mod, "run", degraded_run)
    cfg = write_cfg(tmp_path, RUN_CFG.replace("single", "gem")
                    + f"output.dir = {tmp_path / 'o'}\n")
    assert main(["run", "--config", cfg]) == 2
    assert (tmp_path / "o" / "summary.csv").exists()  # report still written


def test_run_with_csv_stream(tmp_path):
    data = tmp_path / "task.csv"
    rows = ["x0,x1,label"] + [f"{i}.0,{10 - i}.0,{i % 2}" for i in range(10)]
    data.write_text("\n".join(rows) + "\n", encoding="utf-8")
    text = f"""
stream.family = csv
stream.csv_paths = {data}
model.layer_sizes = 2,6,2
train.lr = 0.05
train.iters_per_task = 5
train.batch_size = 4
train.memory_per_task = 4
method.1.kind = single
output.dir = {tmp_path / 'o'}
"""
    cfg = write_cfg(tmp_path, text)
    assert main(["run", "--config", cfg]) == 0
    assert (tmp_path / "o" / "summary.csv").exists()


def test_selfcheck_quick(capsys):
    assert main(["selfcheck", "--quick"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out


def test_usage_error_exit_code(capsys):
    assert main(["frobnicate"]) == 1
    assert main([]) == 1
