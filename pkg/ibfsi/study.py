"""Convergence studies over grid resolution, M_fac and formulation."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import xarray as xr
from dask.base import compute
from dask.delayed import delayed
from dask.distributed import Client
from tqdm import tqdm

from .config import StudyConfig, dump_yaml
from .diagnostics import NORMS, FlowDiagnostics
from .elasticity import Formulation
from .mac_grid import MacGrid
from .scenarios import ScenarioResult, ScenarioRunner, shell_elements_through_thickness, write_outputs

logger = logging.getLogger(__name__)


@dataclass
class StudyTask:
    """One scenario run of a study."""

    name: str
    N: int
    M_fac: int
    formulation: Formulation
    output_dir: Optional[str] = None


def run_task(study: StudyConfig, task: StudyTask) -> Tuple[str, ScenarioResult]:
    """Run one task; module-level so worker processes can unpickle it."""
    logger.info(f"Running study task: {task.name}")
    config = study.base.with_overrides(
        grid={"N": task.N},
        structure={"M_fac": task.M_fac, "formulation": task.formulation.value},
    )
    result = ScenarioRunner(config).run()
    if task.output_dir is not None:
        write_outputs(result, task.output_dir)
    return task.name, result


def shell_shared_nodes(M_coarse: int) -> np.ndarray:
    """Fine-mesh ids of the coarse shell nodes when M doubles (node (i, j) -> (2i, 2j))."""
    i, j = np.meshgrid(np.arange(28 * M_coarse), np.arange(M_coarse + 1), indexing="ij")
    return (2 * i.ravel()) * (2 * M_coarse + 1) + 2 * j.ravel()


class ConvergenceStudy:
    """Run a sweep of scenarios and tabulate errors and observed orders."""

    def __init__(self, study: StudyConfig):
        self.study = study

    def tasks(self, output_dir: Optional[Union[str, Path]] = None) -> List[StudyTask]:
        tasks = []
        for formulation in self.study.formulations:
            for M_fac in self.study.M_fac:
                for N in sorted(self.study.N):
                    name = f"{formulation.value}_M{M_fac}_N{N}"
                    directory = str(Path(output_dir) / name) if output_dir is not None else None
                    tasks.append(StudyTask(name, N, M_fac, formulation, directory))
        return tasks

    def run_tasks(
        self,
        tasks: List[StudyTask],
        show_progress: bool = True,
        parallel: bool = False,
        dask_client: Optional[Client] = None,
    ) -> Dict[str, ScenarioResult]:
        """Run tasks sequentially or as one process per task on a dask cluster.

        Args:
            tasks: Study tasks
            show_progress: Whether to show a progress bar
            parallel: Whether to run tasks in parallel
            dask_client: Existing client; a local one is created and closed otherwise

        Returns:
            Dictionary mapping task name to result
        """
        logger.info(f"Starting study of {len(tasks)} tasks")
        if parallel:
            created_client = False
            if dask_client is None:
                dask_client = Client(processes=True, threads_per_worker=1)
                created_client = True
            try:
                delayed_tasks = [delayed(run_task)(self.study, task) for task in tasks]
                if show_progress:
                    from dask.diagnostics.progress import ProgressBar

                    with ProgressBar():
                        results_list = compute(*delayed_tasks)
                else:
                    results_list = compute(*delayed_tasks)
                results = {name: result for name, result in results_list}
            finally:
                if created_client:
                    dask_client.close()
        else:
            results = {}
            task_iterator = tqdm(tasks, desc="Study tasks", disable=not show_progress)
            for task in task_iterator:
                task_iterator.set_description(f"Running {task.name}")
                name, result = run_task(self.study, task)
                results[name] = result
        logger.info(f"Study complete: ran {len(results)} tasks")
        return results

    def _groups(self, tasks: List[StudyTask]) -> Dict[Tuple[str, int], List[StudyTask]]:
        groups: Dict[Tuple[str, int], List[StudyTask]] = {}
        for task in tasks:
            groups.setdefault((task.formulation.value, task.M_fac), []).append(task)
        for members in groups.values():
            members.sort(key=lambda t: t.N)
        return groups

    def exact_errors(self, tasks: List[StudyTask], results: Dict[str, ScenarioResult]) -> pd.DataFrame:
        """Errors against the static shell solution, one row per task, quantity and norm."""
        rows = []
        for task in tasks:
            summary = results[task.name].summary
            for quantity, key in (("u", "u_errors"), ("p", "p_errors")):
                if key not in summary:
                    raise ValueError(f"Task {task.name} has no exact-solution errors (is gamma zero?)")
                for norm in NORMS:
                    rows.append(self._row(task, quantity, norm, summary[key][norm]))
        return pd.DataFrame(rows)

    def richardson_errors(self, tasks: List[StudyTask], results: Dict[str, ScenarioResult]) -> pd.DataFrame:
        """Differences between successive resolutions, reported at the coarser one."""
        rows = []
        for members in self._groups(tasks).values():
            for coarse, fine in zip(members, members[1:]):
                a, b = results[coarse.name], results[fine.name]
                grid = MacGrid(a.spec)
                errors = {
                    "u": FlowDiagnostics.error_norms(a.u, FlowDiagnostics.restrict(b.u, b.spec), grid),
                    "p": FlowDiagnostics.error_norms(a.p, FlowDiagnostics.restrict(b.p, b.spec), grid),
                }
                if a.chi is not None and a.config.scenario.is_shell:
                    M = shell_elements_through_thickness(coarse.N, coarse.M_fac)
                    errors["chi"] = FlowDiagnostics.nodal_error_norms(a.chi, b.chi[shell_shared_nodes(M)])
                for quantity, norms in errors.items():
                    for norm in NORMS:
                        rows.append(self._row(coarse, quantity, norm, norms[norm]))
        return pd.DataFrame(rows)

    @staticmethod
    def _row(task: StudyTask, quantity: str, norm: str, error: float) -> Dict:
        return {
            "formulation": task.formulation.value,
            "M_fac": task.M_fac,
            "N": task.N,
            "quantity": quantity,
            "norm": norm,
            "error": float(error),
        }

    @staticmethod
    def order_table(errors: pd.DataFrame) -> xr.Dataset:
        """Observed orders log2(e_N / e_2N) between successive resolutions.

        Returns:
            Dataset of ``order`` indexed by formulation, M_fac, quantity, norm and N
            (the coarser resolution of each pair)
        """
        rows = []
        keys = ["formulation", "M_fac", "quantity"]
        for (formulation, M_fac, quantity), group in errors.groupby(keys, sort=True):
            by_N = group.pivot(index="N", columns="norm", values="error").sort_index()
            for N_coarse, N_fine in zip(by_N.index, by_N.index[1:]):
                orders = FlowDiagnostics.orders_from_errors(by_N.loc[N_coarse], by_N.loc[N_fine])
                for norm in NORMS:
                    rows.append(
                        {
                            "formulation": formulation,
                            "M_fac": M_fac,
                            "quantity": quantity,
                            "norm": norm,
                            "N": int(N_coarse),
                            "order": orders[norm],
                        }
                    )
        frame = pd.DataFrame(rows, columns=keys + ["norm", "N", "order"])
        return frame.set_index(keys + ["norm", "N"]).to_xarray()

    def run(
        self,
        output_dir: Optional[Union[str, Path]] = None,
        show_progress: bool = True,
        dask_client: Optional[Client] = None,
    ) -> xr.Dataset:
        """Run the study and write errors.csv, orders.csv and study.yaml.

        Returns:
            Dataset with ``order`` (per norm and resolution pair)
        """
        output_dir = Path(output_dir or self.study.output_dir)
        tasks = self.tasks(output_dir)
        results = self.run_tasks(tasks, show_progress, self.study.parallel, dask_client)
        if self.study.reference == "exact":
            errors = self.exact_errors(tasks, results)
        else:
            errors = self.richardson_errors(tasks, results)
        orders = self.order_table(errors)
        output_dir.mkdir(parents=True, exist_ok=True)
        errors.to_csv(output_dir / "errors.csv", index=False, float_format="%.17g")
        orders.to_dataframe().reset_index().to_csv(output_dir / "orders.csv", index=False, float_format="%.17g")
        dump_yaml(
            {
                "base": self.study.base.to_dict(),
                "N": sorted(self.study.N),
                "M_fac": list(self.study.M_fac),
                "formulation": [f.value for f in self.study.formulations],
                "reference": self.study.reference,
            },
            output_dir / "study.yaml",
        )
        logger.info(f"Wrote study tables to {output_dir}")
        return orders


def richardson_orders(results: List[ScenarioResult]) -> Dict[str, Dict[str, float]]:
    """Orders of u and p from three runs on grids N, 2N, 4N (coarse first)."""
    if len(results) != 3:
        raise ValueError(f"Richardson estimation needs three runs, got {len(results)}")
    coarse, medium, fine = results
    return {
        "u": FlowDiagnostics.richardson_order(coarse.u, medium.u, fine.u, coarse.spec),
        "p": FlowDiagnostics.richardson_order(coarse.p, medium.p, fine.p, coarse.spec),
    }
