"""User-instruction assembly: task description, guiding questions, accessor APIs."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

TASK_HEADER = "### TASK"
COT_HEADER = "### GUIDING QUESTIONS"
API_HEADER = "### BASIC APIS"

SHAPE_TASK = (
    "A swarm of identical robots moves in the plane and must assemble into a target shape. "
    "The shape is a set of square grid cells. Every robot only perceives neighbors and cells "
    "within its sensing radius, and no robot is assigned a particular cell. The robots should "
    "fill the shape evenly while keeping a safe distance from one another. Design a prior "
    "control policy that outputs a 2-D force for one robot, and a reward function that "
    "returns 1 when that robot has accomplished its part of the task and 0 otherwise."
)

SHAPE_COT = (
    "1. Which constraints must a robot satisfy to complete the task?",
    "2. Which of these constraints are basic and which are complex?",
    "3. Given the basic constraints, which basic skills does a robot need?",
    "4. Considering all constraints, which key sub-goals mark the task as accomplished?",
)


@dataclass(frozen=True)
class ApiSignature:
    name: str
    params: str
    returns: str
    doc: str

    def render(self) -> str:
        return f"- {self.name}({self.params}) -> {self.returns}: {self.doc}"


# Accessors backed by lamarl.env.LocalView fields.
SHAPE_APIS = (
    ApiSignature("get_position", "", "(x, y)", "robot position in the world frame"),
    ApiSignature("get_velocity", "", "(vx, vy)", "robot velocity"),
    ApiSignature("is_within_target", "", "bool", "whether the robot lies inside some cell of the shape"),
    ApiSignature(
        "get_neighbors", "", "list of (dx, dy, dvx, dvy)",
        "positions and velocities of sensed neighbors relative to the robot, nearest first",
    ),
    ApiSignature("get_target_cell", "", "(dx, dy)", "relative position of the nearest free cell of the shape"),
    ApiSignature("get_unoccupied_cells", "", "list of (dx, dy)", "relative positions of sensed free cells"),
    ApiSignature("get_sensing_radius", "", "float", "radius within which neighbors and cells are sensed"),
    ApiSignature("get_avoid_radius", "", "float", "robot body radius; two robots collide below twice this distance"),
)


@dataclass(frozen=True)
class PromptBundle:
    task_description: str
    cot_questions: tuple = ()
    api_signatures: tuple = ()
    include_cot: bool = True
    include_apis: bool = True

    def __post_init__(self):
        object.__setattr__(self, "cot_questions", tuple(self.cot_questions))
        object.__setattr__(self, "api_signatures", tuple(self.api_signatures))

    def variant(self, include_cot: bool, include_apis: bool) -> "PromptBundle":
        return replace(self, include_cot=include_cot, include_apis=include_apis)


def shape_assembly_bundle(include_cot: bool = True, include_apis: bool = True) -> PromptBundle:
    return PromptBundle(SHAPE_TASK, SHAPE_COT, SHAPE_APIS, include_cot, include_apis)


def assemble_prompt(bundle: PromptBundle) -> str:
    """Task section, then questions, then APIs; each section under a fixed header."""
    if not bundle.task_description.strip():
        raise ValueError("task description is empty")
    sections = [f"{TASK_HEADER}\n{bundle.task_description.strip()}"]
    if bundle.include_cot:
        sections.append(COT_HEADER + "\n" + "\n".join(bundle.cot_questions))
    if bundle.include_apis:
        sections.append(API_HEADER + "\n" + "\n".join(sig.render() for sig in bundle.api_signatures))
    return "\n\n".join(sections) + "\n"
