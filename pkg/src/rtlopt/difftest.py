"""Differential testing: generated programs, optimized and compared.

Each generated program is pushed through the requested pass list, then both
versions run on the same input vectors and seeds.  The optimized run must
refine the original one: same call events, same returned value (an Undef
original imposes nothing).  Checker rejections and generator output that
fails validation are counted as violations too; they indicate bugs even
though no unsound program was produced.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .interp import outcome_refines, run
from .ir import value_to_text
from .pipeline import CheckerRejection, InputError, PassOptions, run_pipeline
from .progen import GenConfig, gen_args, generate


@dataclass
class DiffReport:
    programs: int = 0
    runs: int = 0
    returned: int = 0
    trapped: int = 0
    out_of_fuel: int = 0
    violations: list = field(default_factory=list)

    def ok(self) -> bool:
        return not self.violations

    def to_text(self) -> str:
        lines = [
            f"programs {self.programs}  runs {self.runs}",
            f"original outcomes: returned {self.returned}  "
            f"trapped {self.trapped}  out-of-fuel {self.out_of_fuel}",
            f"violations: {len(self.violations)}",
        ]
        for v in self.violations[:10]:
            lines.append(f"  program {v['program']} run {v['run']}: "
                         f"{v['kind']} ({v['detail']})")
        if len(self.violations) > 10:
            lines.append(f"  ... {len(self.violations) - 10} more")
        return "\n".join(lines)


def difftest(cfg: GenConfig, passes, opts: PassOptions | None = None,
             runs_per_program: int = 20, fuel: int = 4096) -> DiffReport:
    """Generate cfg.programs programs, optimize with `passes`, and compare
    behaviours over runs_per_program input vectors each."""
    opts = opts or PassOptions()
    rep = DiffReport()
    for index in range(cfg.programs):
        program, argspecs = generate(cfg, index)
        rep.programs += 1
        try:
            optimized, _ = run_pipeline(program, passes, opts)
        except InputError as e:
            rep.violations.append({"program": index, "run": -1,
                                   "kind": "input-error", "detail": str(e)})
            continue
        except CheckerRejection as e:
            rep.violations.append({"program": index, "run": -1,
                                   "kind": "checker-rejected",
                                   "detail": str(e)})
            continue
        for r in range(runs_per_program):
            rng = random.Random(f"{cfg.seed}/{index}/{r}/args")
            args = gen_args(argspecs, rng)
            orig = run(program, args, fuel=fuel, seed=index)
            new = run(optimized, args, fuel=fuel, seed=index)
            rep.runs += 1
            tag = orig.status[0]
            if tag == "returned":
                rep.returned += 1
            elif tag == "trapped":
                rep.trapped += 1
            else:
                rep.out_of_fuel += 1
            if not outcome_refines(orig, new):
                rep.violations.append({
                    "program": index, "run": r,
                    "kind": "refinement",
                    "detail": f"args=({', '.join(map(value_to_text, args))}) "
                              f"orig={orig.status} new={new.status}",
                })
    return rep
