import importlib.util
from pathlib import Path

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_conv.py"


def load_bench():
    spec = importlib.util.spec_from_file_location("bench_conv", BENCH)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_benchmark_runs_and_backends_agree(capsys):
    mod = load_bench()
    rows = mod.bench(repeats=1, cases=[(2, 3, 9, 9, 4, 3, 1, 1), (1, 2, 10, 10, 3, 3, 2, 0)])
    assert len(rows) == 2
    assert all(t > 0 for _, times in rows for t in times.values())
    mod.CASES[:] = [(1, 1, 8, 8, 1, 3, 1, 0)]
    mod.main(["--repeats", "1"])
    out = capsys.readouterr().out
    assert "python" in out and "(1, 1, 8, 8, 1, 3, 1, 0)" in out
