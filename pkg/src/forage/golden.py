"""A worked multi-hop episode over a synthetic technical report.

The fixture document plants the evidence lines at fixed line numbers inside
deterministic filler, and the script below drives a 19-step episode over it:
coarse grep passes, two dense reads, seven commits and two evaluations,
ending in option C. Used by the replay tests and the ``demo`` CLI command.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .actions import Action, make_action
from .controller import Backends, Instance
from .gateway import MockBackend, ToolCall

DOC_NAME = "context_file.txt"
N_LINES = 6600

QUERY = (
    "If I turn off the permission to obtain location information, "
    "what context information can ContextCam extract at most?"
)
CHOICES = {
    "A": "facial expression, location, music, screen content, weather",
    "B": "facial expression, music, screen content, weather",
    "C": "facial expression, music, screen content",
    "D": "facial expression, screen content",
}
ANSWER = "(C) facial expression, music, and screen content"

# line number -> text; everything else is filler
PLANTED = {
    437: "ContextCam senses five types of contextual information: location, facial expression, music, screen content, and weather.",
    438: "We focus on these context types because each one can be sensed on commodity phones; contextual information drives the captions.",
    512: "In our study the contextual information includes both raw signals and derived labels.",
    1212: "3 System Overview",
    1216: "The architecture has three stages.",
    1219: "Sensor Layer -> Detectors -> Context Selector",
    1222: "Each detector wraps one platform API and emits a typed record.",
    1226: "All detector outputs are aggregated into a context bundle before selection.",
    1230: "The Weather detector takes as input the Location detector's output (lat/lon or coarse city).",
    1233: "If Location is unavailable, the Weather field is set to N/A and omitted from the context bundle.",
    1238: "The Context Selector ranks the remaining records by salience.",
    1810: "Table 4: Context detectors used in the implemented system.",
    1813: "Location: GPS fix with network positioning as a refinement.",
    1817: "(positioning accuracy is reported in metres)",
    1821: "Screen Content: Capturing the text displayed on the user's current screen via the accessibility service.",
    1825: "Facial Expression: Classifying the emotion after capturing the user's frontal face with the front camera.",
    1829: "(face crops are discarded after classification)",
    1833: "Weather: Retrieving real-time weather data for the user's location from a public forecast service.",
    1837: "Music: If music is detected in the environment, returning its song title and artist.",
    1842: "All detectors feed into the Context Selector described in the system overview.",
    5519: "Users can disable OS-level Location permission at any time from the settings screen.",
    5527: "When disabled, the Location detector is not executed.",
    5536: "Detectors that require Location output are automatically disabled as well.",
    5576: "As a privacy guarantee we never indirectly infer location from screen or app content.",
    5582: "This privacy guarantee also covers photos already stored on the device.",
    6350: "Limitations of the current prototype.",
    6354: "No fallback to IP-based geolocation.",
    6358: "No manual city entry in current prototype.",
    6362: "If Location permission is denied, location-dependent detectors are skipped.",
    6368: "These limitations will be revisited in future versions.",
}

# words that cannot collide with any pattern the script searches for
_FILLER_WORDS = (
    "lorem ipsum dolor sit amet consectetur adipiscing elit sed do eiusmod tempor "
    "incididunt ut labore et dolore magna aliqua enim ad minim veniam quis nostrud "
    "exercitation ullamco laboris nisi aliquip ex ea commodo consequat duis aute irure "
    "in reprehenderit voluptate velit esse cillum fugiat nulla pariatur excepteur sint "
    "occaecat cupidatat non proident sunt culpa qui officia deserunt mollit anim id est"
).split()


def filler_line(rng: random.Random) -> str:
    words = [rng.choice(_FILLER_WORDS) for _ in range(rng.randint(6, 14))]
    return " ".join(words).capitalize() + "."


def document_text(seed: int = 7) -> str:
    rng = random.Random(seed)
    lines = []
    for n in range(1, N_LINES + 1):
        lines.append(PLANTED.get(n) or filler_line(rng))
    return "\n".join(lines) + "\n"


def write_document(directory) -> Path:
    path = Path(directory) / DOC_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document_text(), encoding="utf-8")
    return path


def instance(directory) -> Instance:
    return Instance("contextcam-location", QUERY, write_document(directory), "C", dict(CHOICES))


PLAN = (
    "Plan: (i) list the supported context types; (ii) read the detector table for dependencies; "
    "(iii) find the permission policy for location; (iv) rule out fallbacks and indirect inference; "
    "(v) derive the maximal set and map it to an option."
)

# the final state's anchors, in commit order
UNIT_ANCHORS = [
    (437, 438),
    (1810, 1842),
    (5519, 5576),
    (1216, 1238),
    (6350, 6368),
    (1821, 1837),
    (5519, 5576),  # synthesis unit reuses e3's anchor
]

_UNITS = [
    "ContextCam supports five context types: location, screen content, facial expression, weather, music.",
    "Detector table: location comes from GPS plus network positioning; weather is fetched for the user's location; "
    "screen, face and music use screen, camera and microphone signals.",
    "With location permission off the location detector does not run, detectors that need its output are disabled, "
    "and location is never inferred indirectly.",
    "Weather consumes the location detector's output and is dropped when location is unavailable.",
    "The prototype has no IP or manual-city fallback; location-dependent detectors are skipped when permission is denied.",
    "Screen content, facial expression and music rely on screen, camera and microphone only, not on location.",
    "Synthesis from e3-e6: location off removes location and, through the dependency, weather; with no fallback the "
    "most that can be extracted is screen content, facial expression and music.",
]

_MISSING = [
    "explicit policy for what happens when location permission is off",
    "whether weather consumes the location detector's output or can run on its own",
    "any fallback (IP or manual city) or indirect inference that could still supply location or weather",
]


def _unit(i: int) -> dict:
    s, e = UNIT_ANCHORS[i]
    anchor = "e3" if i == 6 else f"{DOC_NAME}:{s}-{e}"
    return {"content": _UNITS[i], "anchor": anchor}


def script() -> list[Action]:
    """The 19 recorded actions, in order."""
    ci = {"case_insensitive": True}
    raw = [
        ("GetFileInfo", {"source": DOC_NAME}),
        ("TodoWrite", {"todos": PLAN}),
        ("Grep", {"pattern": "five types of contextual information|contextual information", **ci}),
        ("Grep", {"pattern": "Table 4|Context detectors used|Weather:|Location:", **ci}),
        ("Update", {"units": [_unit(0), _unit(1)]}),
        ("Evaluate", {}),
        ("Grep", {"pattern": "disable OS-level|Location permission|indirectly infer location|dependency-based", **ci}),
        ("Update", {"units": [_unit(2)]}),
        ("Grep", {"pattern": "Weather takes as input the Location detector|Weather is marked N/A", **ci}),
        ("Grep", {"pattern": "System overview|pipeline|Sensor Layer|Context Selector", **ci}),
        ("Read", {"offset": 1216, "limit": 75}),
        ("Update", {"units": [_unit(3)]}),
        ("Grep", {"pattern": "IP-based geolocation|manual city entry|default city", "scope": "1800-1850", **ci}),
        ("Read", {"offset": 6346, "limit": 55}),
        ("Update", {"units": [_unit(4)]}),
        ("Grep", {"pattern": "Screen Content: Capturing|Facial Expression:|Music: If music", **ci}),
        ("Update", {"units": [_unit(5)]}),
        ("Update", {"units": [_unit(6)]}),
        ("Evaluate", {}),
    ]
    return [make_action(kind, args) for kind, args in raw]


def diagnoses() -> list[str]:
    first = {"is_sufficient": False, "missing_info": _MISSING,
             "reasoning": "Types and detectors are known but the permission policy and dependencies are not.",
             "confidence": 0.35}
    second = {"is_sufficient": True, "missing_info": [],
              "reasoning": "Location off disables location and cascades to weather; indirect inference is ruled out "
                           "and no fallback exists, leaving screen, face and music.",
              "confidence": 0.96}
    return [json.dumps(first), json.dumps(second)]


def backends(tokenizer: str | None = None) -> tuple[Backends, MockBackend, MockBackend, MockBackend]:
    """Fresh mocks: policy replays the script, diagnosis and answer are canned."""
    policy = MockBackend([ToolCall(a.kind, a.args) for a in script()], tokenizer)
    diag = MockBackend(diagnoses(), tokenizer)
    answer = MockBackend([ANSWER], tokenizer)
    return Backends(policy, diag, answer), policy, diag, answer
