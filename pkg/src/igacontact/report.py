"""Run outputs: delimited tables, field snapshots, manifest, figures.

Every numeric value is written with 17 significant digits so reruns with the
same configuration produce byte-identical files. Figures are rendered with
the Agg backend and are purely auxiliary; the CSV files are the contract.
"""

from __future__ import annotations

import os
import sys
from dataclasses import asdict

import numpy as np

from .assembly import ContactConfig
from .mesh import Scene, scene_to_text
from .scenarios import (
    Scenario,
    body_reaction,
    patch_pressure_error,
    patch_reference,
    patch_stress_error,
    step_bias,
)
from .solver import Model, SolveReport


def fnum(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(c if isinstance(c, str) else fnum(c) for c in row))
            f.write("\n")


def write_loaddisp(path: str, scene: Scene, report: SolveReport) -> None:
    names = [b.name for b in scene.bodies]
    header = ["step", "load_factor"]
    for bn in names:
        header += [f"R_{bn}_x", f"R_{bn}_y"]
    header += ["bias", "balance", "iterations"]
    rows = []
    recs = [r for r in report.steps if r.scheduled]
    for k, r in enumerate(recs):
        row = [str(k + 1), r.s]
        for bn in names:
            row += list(body_reaction(r, scene, bn))
        row.append(step_bias(r, scene) if len(names) >= 2 else 0.0)
        row += [r.balance, str(r.iterations)]
        rows.append(row)
    write_csv(path, header, rows)


def write_pressure_trace(path: str, model: Model, u: np.ndarray,
                         n_per_elem: int = 25) -> None:
    header = ["pass", "body", "side", "xi", "x", "y", "gap",
              "p_nominal", "p_true"]
    rows = []
    for ip, trace in enumerate(model.contact.pressure_trace(u, n_per_elem)):
        for j in range(len(trace["xi"])):
            rows.append([
                str(ip), trace["body"], trace["side"], trace["xi"][j],
                trace["x"][j, 0], trace["x"][j, 1], trace["gap"][j],
                trace["p_nominal"][j], trace["p_true"][j],
            ])
    write_csv(path, header, rows)


def write_patch_error(path: str, model: Model, u: np.ndarray,
                      pbar: float) -> dict[str, float]:
    mats = set(model.scene.materials.values())
    from .material import NeoHookean
    _, sxx_ex, syy_ex = patch_reference(NeoHookean(*mats.pop()), pbar)
    vert = 0.0
    for fld in model.stress_field(u):
        vert = max(vert, float(np.abs(fld["sigma"][:, 1] - syy_ex).max()))
    metrics = {
        "pressure_true_max_rel": patch_pressure_error(model, u, pbar, "true"),
        "pressure_nominal_max_rel": patch_pressure_error(model, u, pbar, "nominal"),
        "vertical_stress_max_rel": vert / pbar,
        "stress_max_rel": patch_stress_error(model, u, pbar),
    }
    write_csv(path, ["metric", "value"],
              [[k, v] for k, v in metrics.items()])
    return metrics


def write_fields(path: str, model: Model, u: np.ndarray) -> None:
    with open(path, "w", newline="\n") as f:
        f.write("body X Y x y sigma_xx sigma_yy sigma_xy sigma_zz I1\n")
        for fld in model.stress_field(u):
            s = fld["sigma"]
            zz = fld["sigma_zz"]
            for q in range(len(zz)):
                i1 = s[q, 0] + s[q, 1] + zz[q]
                cells = [fld["body"]] + [fnum(v) for v in (
                    fld["X"][q, 0], fld["X"][q, 1], fld["x"][q, 0],
                    fld["x"][q, 1], s[q, 0], s[q, 1], s[q, 2], zz[q], i1)]
                f.write(" ".join(cells) + "\n")


def write_manifest(path: str, scenario: Scenario, config: ContactConfig,
                   report: SolveReport, files: list[str],
                   mesh_level: int) -> None:
    lines = [
        f"scenario {scenario.name}",
        f"description {scenario.description}",
        f"mesh_level {mesh_level}",
    ]
    for key, val in asdict(config).items():
        lines.append(f"config.{key} {val}")
    for key, val in asdict(scenario.settings).items():
        lines.append(f"settings.{key} {val}")
    lines.append(f"python {sys.version.split()[0]}")
    lines.append(f"numpy {np.__version__}")
    import scipy
    lines.append(f"scipy {scipy.__version__}")
    lines.append(f"converged {report.converged}")
    if report.message:
        lines.append(f"message {report.message}")
    lines.append(f"steps_completed {len([r for r in report.steps if r.scheduled])}")
    lines.append(f"total_iterations {sum(r.iterations for r in report.steps)}")
    lines.append("files " + " ".join(files))
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    scene_path = os.path.join(os.path.dirname(path), "scene.txt")
    with open(scene_path, "w", newline="\n") as f:
        f.write(scene_to_text(scenario.scene))


# ------------------------------------------------------------------ figures


def _agg_pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_pressure_trace(path: str, model: Model, u: np.ndarray,
                        pbar: float | None = None) -> None:
    plt = _agg_pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for trace in model.contact.pressure_trace(u):
        label = f"{trace['body']}.{trace['side']}"
        ax.plot(trace["x"][:, 0], trace["p_true"], ".-", ms=3, lw=0.8,
                label=f"{label} true")
    if pbar is not None:
        ax.axhline(pbar, color="k", lw=0.8, ls="--", label="applied")
    ax.set_xlabel("x")
    ax.set_ylabel("contact pressure")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_loaddisp(path: str, scene: Scene, report: SolveReport) -> None:
    plt = _agg_pyplot()
    recs = [r for r in report.steps if r.scheduled]
    s = [r.s for r in recs]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    for b in scene.bodies:
        ry = [body_reaction(r, scene, b.name)[1] for r in recs]
        ax1.plot(s, ry, label=b.name)
    ax1.set_xlabel("load factor")
    ax1.set_ylabel("vertical reaction")
    ax1.legend(fontsize=8)
    if len(scene.bodies) >= 2:
        ax2.semilogy(s, [max(step_bias(r, scene), 1e-300) for r in recs])
        ax2.set_xlabel("load factor")
        ax2.set_ylabel("|R_UB - R_LB|")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_deformed(path: str, model: Model, u: np.ndarray) -> None:
    from .kinematics import CurveView
    from .mesh import contact_surface

    plt = _agg_pyplot()
    fig, ax = plt.subplots(figsize=(6, 5))
    for b in model.scene.bodies:
        sides = ("curve",) if b.is_curve else ("bottom", "right", "top", "left")
        for side in sides:
            try:
                surf = contact_surface(model.scene, b.name, side)
            except Exception:
                continue
            view = CurveView(surf.kv, model.X[surf.nodes] + u[surf.nodes],
                             surf.wts, surf.orient)
            ts = np.linspace(surf.kv.start, surf.kv.end, 80)
            pts = np.array([view.at(t).x for t in ts])
            ax.plot(pts[:, 0], pts[:, 1], "-", color="tab:blue", lw=0.9)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


# ------------------------------------------------------------- orchestration


def write_run_outputs(outdir: str, scenario: Scenario, config: ContactConfig,
                      model: Model, u: np.ndarray, report: SolveReport,
                      mesh_level: int = 0, plots: bool = True) -> list[str]:
    os.makedirs(outdir, exist_ok=True)
    files = []

    def out(name):
        files.append(name)
        return os.path.join(outdir, name)

    write_loaddisp(out("loaddisp.csv"), scenario.scene, report)
    write_pressure_trace(out("pressure_trace.csv"), model, u)
    if scenario.pbar is not None:
        write_patch_error(out("patch_error.csv"), model, u, scenario.pbar)
    laststep = len([r for r in report.steps if r.scheduled])
    write_fields(out(f"fields_step{laststep}.txt"), model, u)
    if plots:
        plot_pressure_trace(out("pressure_trace.png"), model, u, scenario.pbar)
        plot_loaddisp(out("loaddisp.png"), scenario.scene, report)
        plot_deformed(out("deformed.png"), model, u)
    write_manifest(os.path.join(outdir, "manifest.txt"), scenario, config,
                   report, files, mesh_level)
    return files
