"""Smoke test for the `valuator` extension module.

Build and install first, e.g. `pip install --no-build-isolation crates/py`,
then run `python crates/py/python/smoke_test.py` from the repository root.
"""

import pathlib
import tempfile

import valuator

ROOT = pathlib.Path(__file__).resolve().parents[3]
CLOCK = "2024-11-04"


def write_config(tmp: pathlib.Path) -> pathlib.Path:
    cfg = tmp / "smoke.toml"
    cfg.write_text(
        "[data]\n"
        f'source = "fixture:{ROOT / "fixtures"}"\n'
        "[llm]\n"
        'backend = "scripted"\n'
        f'script = "{ROOT / "scripts" / "byd.rules.json"}"\n'
        "[paths]\n"
        f'out_dir = "{tmp / "out"}"\n'
        f'runs_dir = "{tmp / "runs"}"\n'
    )
    return cfg


def main() -> None:
    with tempfile.TemporaryDirectory() as d:
        cfg = write_config(pathlib.Path(d))

        base = valuator.value_base("BYD", config=cfg, clock=CLOCK)
        assert base["value_per_share"] > 0, base

        record = valuator.run("BYD", config=cfg, clock=CLOCK, persist=True)
        assert record["decision"] == "Buy", record["decision"]
        assert record["run_id"].startswith("BYD-20241104-")
        again = valuator.load_run(record["run_id"], config=cfg)
        assert again["final_value"] == record["final_value"]

        table = valuator.sensitivity(
            "BYD",
            ("terminal_margin", [0.05, 0.06, 0.07]),
            ("cost_of_capital", [0.08, 0.09]),
            config=cfg,
            clock=CLOCK,
            run_id=record["run_id"],
        )
        column = [row[0] for row in table["cells"]]
        assert column == sorted(column), column

        metrics = valuator.stability("BYD", n=3, config=cfg, clock=CLOCK)
        assert metrics["n_runs"] == 3 and metrics["decision_flip_rate"] == 0.0, metrics

        try:
            valuator.value_base("NOPE", config=cfg, clock=CLOCK)
        except ValueError:
            pass
        else:
            raise AssertionError("missing ticker should raise ValueError")

    print(f"valuator {valuator.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
