"""Coverage/precision evaluation of policy decisions on held-out data.

Coverage is the fraction of instances where a policy accepted; precision is
the fraction of accepted decisions that were correct. Reflection decisions
are correct when the accepted reflection matches the ground-truth residual
bin's reflection; pose decisions additionally require the ground-truth
revolution to fall inside the accepted window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError
from .geometry import build_sample_grid, circular_angle_distance, nearest_grid_bin
from .policies import PolicyDecision, policy_pose, policy_reflection
from .scoring import PoseDistribution


@dataclass
class InstanceEval:
    """Everything measured for a single held-out instance."""

    scene: int
    index: int
    visibility: float
    feature_visibility: float
    gt_reflection: int
    gt_revolution_deg: float
    distribution: PoseDistribution
    reflection_decision: PolicyDecision
    pose_decision: PolicyDecision
    reflection_correct: bool
    pose_correct: bool


@dataclass
class EvalRow:
    object_name: str
    task: str
    n_instances: int
    n_accepted: int
    n_correct: int

    @property
    def coverage(self) -> float:
        return self.n_accepted / self.n_instances if self.n_instances else 0.0

    @property
    def precision(self):
        """Fraction of accepted decisions that were correct; None when
        nothing was accepted (reported as N/A)."""
        if self.n_accepted == 0:
            return None
        return self.n_correct / self.n_accepted


@dataclass
class EvalReport:
    rows: list
    cutoff: float
    window_deg: float
    details: list = field(default_factory=list)

    def row(self, task: str) -> EvalRow:
        for r in self.rows:
            if r.task == task:
                return r
        raise KeyError(task)

    def to_csv(self, path) -> None:
        lines = ["object,task,instances,coverage,precision"]
        for r in self.rows:
            prec = "N/A" if r.precision is None else f"{100 * r.precision:.1f}"
            lines.append(
                f"{r.object_name},{r.task},{r.n_instances},"
                f"{100 * r.coverage:.1f},{prec}"
            )
        Path(path).write_text("\n".join(lines) + "\n")

    def format_table(self) -> str:
        header = (
            f"{'object':<24}{'task':<12}{'instances':>10}"
            f"{'coverage %':>12}{'precision %':>13}"
        )
        out = [header, "-" * len(header)]
        for r in self.rows:
            prec = "N/A" if r.precision is None else f"{100 * r.precision:.1f}"
            out.append(
                f"{r.object_name:<24}{r.task:<12}{r.n_instances:>10}"
                f"{100 * r.coverage:>12.1f}{prec:>13}"
            )
        out.append(f"(cutoff {self.cutoff}, window {self.window_deg} deg)")
        return "\n".join(out)


def evaluate(estimator, records, cutoff: float = 0.99, window_deg: float = 15.0,
             object_name: str = "object") -> EvalReport:
    """Run both policies over held-out records and tally coverage/precision.

    `records` are dataset InstanceRecord entries (typically index.split("test")).
    The stored initialization pose is used so results are deterministic.
    """
    records = list(records)
    if not records:
        raise DataError("no instances to evaluate")
    details = []
    refl_row = EvalRow(object_name, "reflection", 0, 0, 0)
    pose_row = EvalRow(object_name, "pose", 0, 0, 0)

    for rec in records:
        cloud = rec.load_cloud()
        t_init = rec.load_init_pose()
        gt = rec.load_gt_pose()
        dist = estimator.predict_distribution(cloud, t_init)

        grid = build_sample_grid(t_init, estimator.n_revolution)
        gt_bin = nearest_grid_bin(grid, gt.rotation)
        gt_refl, gt_revo, _ = grid.entry(gt_bin)

        d_refl = policy_reflection(dist, cutoff)
        d_pose = policy_pose(dist, cutoff, window_deg)
        refl_ok = d_refl.accepted and d_refl.reflection_index == gt_refl
        pose_ok = (
            d_pose.accepted
            and d_pose.reflection_index == gt_refl
            and circular_angle_distance(d_pose.window_center_deg, gt_revo)
            <= window_deg / 2.0 + 1e-9
        )

        refl_row.n_instances += 1
        pose_row.n_instances += 1
        if d_refl.accepted:
            refl_row.n_accepted += 1
            refl_row.n_correct += int(refl_ok)
        if d_pose.accepted:
            pose_row.n_accepted += 1
            pose_row.n_correct += int(pose_ok)

        details.append(
            InstanceEval(
                scene=rec.scene,
                index=rec.index,
                visibility=rec.visibility,
                feature_visibility=rec.feature_visibility,
                gt_reflection=gt_refl,
                gt_revolution_deg=gt_revo,
                distribution=dist,
                reflection_decision=d_refl,
                pose_decision=d_pose,
                reflection_correct=refl_ok,
                pose_correct=pose_ok,
            )
        )

    return EvalReport(
        rows=[refl_row, pose_row], cutoff=cutoff, window_deg=window_deg, details=details
    )
