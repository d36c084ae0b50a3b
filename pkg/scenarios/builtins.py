import copy

MONTGOMERY_PROFILE = "1/2*r^2 - 1/4*r^4"

MONTGOMERY = {
    "name": "montgomery",
    "description": "Cylindrical structure whose helices at r = 1 are abnormal",
    "chart": {
        "names": ["r", "theta", "z"],
        "domain": [[0.01, 10], [None, None], [None, None]],
    },
    "frame": [
        ["1", "0", "0"],
        ["0", "1", f"-({MONTGOMERY_PROFILE})"],
    ],
    "complement": [["0", "0", "1"]],
    "tasks": [
        {
            "name": "helix",
            "kind": "abnormal_test",
            "x0": [1, 0, 0],
            "segments": [{"coefficients": ["0", "1"], "start": 0, "end": 1}],
            "samples": 32,
        },
        {
            "name": "radial",
            "kind": "abnormal_test",
            "x0": [0.5, 0, 0],
            "segments": [{"coefficients": ["1", "0"], "start": 0, "end": 1}],
            "samples": 32,
        },
        {
            "name": "radial-geodesic",
            "kind": "geodesic",
            "x0": [1, 0, 0],
            "p0": [1, 0, 0],
            "T": 1,
        },
    ],
}

LIU_SUSSMANN = {
    "name": "liu-sussmann",
    "description": "Lines x = 0 and x = 2 are abnormal, x = 1 is not",
    "chart": {"names": ["x", "y", "z"]},
    "frame": [
        ["1", "0", "0"],
        ["0", "1-x", "x^2"],
    ],
    "complement": [["0", "0", "1"]],
    "tasks": [
        {
            "name": f"line-x{x}",
            "kind": "abnormal_test",
            "x0": [x, 0, 0],
            "segments": [{"coefficients": ["0", "1"], "start": 0, "end": 1}],
            "samples": 32,
        }
        for x in (0, 1, 2)
    ]
    + [
        {
            "name": "filtration",
            "kind": "bracket_filtration",
            "x": [0, 0, 0],
            "depth": 3,
        }
    ],
}

HEISENBERG = {
    "name": "heisenberg",
    "description": "Heisenberg group; the x axis is normal and nonholonomic",
    "chart": {"names": ["x", "y", "z"]},
    "frame": [
        ["1", "0", "-y/2"],
        ["0", "1", "x/2"],
    ],
    "complement": [["0", "0", "1"]],
    "tasks": [
        {
            "name": "geodesic",
            "kind": "geodesic",
            "x0": [0, 0, 0],
            "p0": [1, 0, 0],
            "T": 1,
        },
        {
            "name": "nonholonomic",
            "kind": "nonholonomic",
            "x0": [0, 0, 0],
            "u0": [1, 0],
            "T": 1,
        },
        {
            "name": "compatibility",
            "kind": "compatibility",
            "x0": [0, 0, 0],
            "u0": [1, 0],
            "T": 1,
        },
        {
            "name": "filtration",
            "kind": "bracket_filtration",
            "x": [0, 0, 0],
            "depth": 2,
        },
    ],
}

BUILTINS = {
    scenario["name"]: scenario for scenario in (MONTGOMERY, LIU_SUSSMANN, HEISENBERG)
}


def get_builtin(name: str) -> dict:
    return copy.deepcopy(BUILTINS[name])
