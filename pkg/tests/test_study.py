"""Tests for convergence studies."""

from pathlib import Path

import pytest
import numpy as np
import pandas as pd
from dask.distributed import Client

from ibfsi.config import ScenarioConfig, StudyConfig
from ibfsi.elasticity import Formulation
from ibfsi.fem_mesh import build_shell_mesh
from ibfsi.study import ConvergenceStudy, richardson_orders, shell_shared_nodes

STUDIES = Path(__file__).parents[1] / "configs" / "studies"


@pytest.fixture
def taylor_green_study(tmp_path):
    """Richardson study of a short Taylor-Green run on N = 8, 16, 32."""
    base = ScenarioConfig.for_scenario(
        "taylor_green",
        {"time": {"t_end": 0.125}, "output": {"dump_fields": False}},
    )
    study = StudyConfig(base=base, N=[8, 16, 32], reference="richardson", output_dir=str(tmp_path / "study"))
    study.validate()
    return study


def test_task_names(taylor_green_study):
    """Test one task per formulation, M_fac and resolution."""
    taylor_green_study.formulation = [Formulation.UNIFIED, Formulation.PARTITIONED]
    tasks = ConvergenceStudy(taylor_green_study).tasks("out")

    assert [t.name for t in tasks[:3]] == ["unified_M2_N8", "unified_M2_N16", "unified_M2_N32"]
    assert tasks[-1].name == "partitioned_M2_N32"
    assert tasks[0].output_dir.endswith("unified_M2_N8")


def test_shell_shared_nodes():
    """Test that shared ids address the same reference points on the refined shell."""
    coarse, _ = build_shell_mesh(0.25, 0.0625, 2)
    fine, _ = build_shell_mesh(0.25, 0.0625, 4)

    ids = shell_shared_nodes(2)

    assert len(ids) == coarse.n_nodes
    assert np.allclose(fine.nodes[ids], coarse.nodes)


def test_order_table():
    """Test observed orders from errors of known power-law decay in h."""
    rows = []
    for N in (16, 32, 64):
        for quantity in ("u", "p"):
            for norm in ("L1", "L2", "Linf"):
                scale = 2.0 if quantity == "u" else 1.0
                rows.append(
                    {
                        "formulation": "unified",
                        "M_fac": 2,
                        "N": N,
                        "quantity": quantity,
                        "norm": norm,
                        "error": 3.0 * (1.0 / N) ** scale,
                    }
                )

    orders = ConvergenceStudy.order_table(pd.DataFrame(rows))["order"]

    assert set(orders.coords["N"].values) == {16, 32}
    assert float(orders.sel(formulation="unified", M_fac=2, quantity="u", norm="L2", N=16)) == pytest.approx(2.0)
    assert float(orders.sel(formulation="unified", M_fac=2, quantity="p", norm="Linf", N=32)) == pytest.approx(1.0)


def test_richardson_study_writes_tables(taylor_green_study, tmp_path):
    """Test a full sequential study run and its output files."""
    study = ConvergenceStudy(taylor_green_study)

    orders = study.run(show_progress=False)

    directory = tmp_path / "study"
    errors = pd.read_csv(directory / "errors.csv")
    table = pd.read_csv(directory / "orders.csv")
    assert set(errors["quantity"]) == {"u", "p"}
    assert sorted(set(errors["N"])) == [8, 16]
    assert (directory / "study.yaml").exists()
    assert (directory / "unified_M2_N8" / "diagnostics.csv").exists()
    assert len(table) == 2 * 3
    assert float(orders["order"].sel(quantity="u", norm="L2").squeeze()) > 1.0


def test_exact_errors_need_static_shells(taylor_green_study):
    """Test that exact-solution tables are refused for runs without them."""
    study = ConvergenceStudy(taylor_green_study)
    tasks = study.tasks()[:2]
    results = study.run_tasks(tasks, show_progress=False)

    with pytest.raises(ValueError):
        study.exact_errors(tasks, results)


def test_richardson_orders_from_three_runs(taylor_green_study):
    """Test order estimation directly from three nested runs."""
    study = ConvergenceStudy(taylor_green_study)
    tasks = study.tasks()
    results = study.run_tasks(tasks, show_progress=False)

    orders = richardson_orders([results[t.name] for t in tasks])

    assert set(orders) == {"u", "p"}
    assert orders["u"]["L2"] > 1.0
    with pytest.raises(ValueError):
        richardson_orders([results[tasks[0].name]])


def test_parallel_tasks_match_sequential(taylor_green_study):
    """Test that tasks run through a dask client give the sequential results."""
    study = ConvergenceStudy(taylor_green_study)
    tasks = study.tasks()[:2]
    sequential = study.run_tasks(tasks, show_progress=False)

    with Client(processes=False, n_workers=1, threads_per_worker=2) as client:
        parallel = study.run_tasks(tasks, show_progress=False, parallel=True, dask_client=client)

    assert set(parallel) == set(sequential)
    for name in sequential:
        assert np.array_equal(parallel[name].u.u1, sequential[name].u.u1)


@pytest.mark.slow
def test_static_anisotropic_shell_orders(tmp_path):
    """Test second-order velocity and first-order L∞ pressure convergence at M_fac = 2, N = 64, 128, 256."""
    study = StudyConfig.from_yaml(STUDIES / "shell_anisotropic_static.yaml")
    study.M_fac = [2]
    runner = ConvergenceStudy(study)
    tasks = runner.tasks(tmp_path)
    results = runner.run_tasks(tasks, show_progress=False)

    orders = runner.order_table(runner.exact_errors(tasks, results))["order"].sel(M_fac=2)

    assert np.all(np.abs(orders.sel(quantity="u").values - 2.0) <= 0.3)
    assert np.all(np.abs(orders.sel(quantity="p", norm="Linf").values - 1.0) <= 0.3)


@pytest.mark.slow
def test_static_orthotropic_shell_orders(tmp_path):
    """Test first-order velocity and half-order L² pressure convergence for both formulations."""
    study = StudyConfig.from_yaml(STUDIES / "shell_orthotropic_static.yaml")

    orders = ConvergenceStudy(study).run(output_dir=tmp_path, show_progress=False)["order"]

    assert set(orders.coords["formulation"].values) == {"unified", "partitioned"}
    assert np.all(np.abs(orders.sel(quantity="u").values - 1.0) <= 0.3)
    assert np.all(np.abs(orders.sel(quantity="p", norm="L1").values - 1.0) <= 0.3)
    assert np.all(np.abs(orders.sel(quantity="p", norm="L2").values - 0.5) <= 0.2)
