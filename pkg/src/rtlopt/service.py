"""HTTP front end over the optimizer library.

Programs travel as text in JSON bodies.  Input trouble (parse, validation,
typing) maps to 400; a verifier refusing a transform maps to 422.
"""

from __future__ import annotations

from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import dup
from .difftest import difftest
from .interp import run
from .ir import ParseError, parse_program, print_program, validate, \
    value_from_text, value_to_text
from .pipeline import (
    CheckerRejection, InputError, PassOptions, analysis_stats, run_pipeline,
)
from .progen import GenConfig
from .typecheck import IllTyped, infer

app = FastAPI(title="rtlopt", version="0.1.0")


class OptionsModel(BaseModel):
    unroll_threshold: int = 30
    across_calls: Literal["forget-all", "forget-mem"] = "forget-all"
    glb_moves: bool = True
    trivial_consts: bool = True

    def to_pass_options(self) -> PassOptions:
        return PassOptions(self.unroll_threshold, self.across_calls,
                           self.glb_moves, self.trivial_consts)


class OptRequest(BaseModel):
    program: str
    passes: list[str] = ["unroll", "cse3", "selfmove", "dce"]
    options: OptionsModel = Field(default_factory=OptionsModel)


class OptResponse(BaseModel):
    program: str
    stats: dict


class RunRequest(BaseModel):
    program: str
    args: list[str] = []
    fuel: int = 10**6
    seed: int = 0


class CallEvent(BaseModel):
    symbol: str
    args: list[str]
    ret: str


class RunResponse(BaseModel):
    status: Literal["returned", "trapped", "outoffuel"]
    value: Optional[str] = None
    reason: Optional[str] = None
    trace: list[CallEvent]


class TypecheckRequest(BaseModel):
    program: str


class TypecheckResponse(BaseModel):
    functions: dict[str, dict[str, str]]


class CheckDupRequest(BaseModel):
    original: str
    transformed: str
    revmap: dict[str, dict[str, int]] = {}


class CheckDupResponse(BaseModel):
    ok: bool


class DifftestRequest(BaseModel):
    seed: int = 0
    programs: int = 50
    runs: int = 10
    fuel: int = 4096
    passes: list[str] = ["unroll", "cse3", "selfmove", "dce"]
    options: OptionsModel = Field(default_factory=OptionsModel)


class DifftestResponse(BaseModel):
    ok: bool
    programs: int
    runs: int
    returned: int
    trapped: int
    out_of_fuel: int
    violations: list[dict]


class StatsRequest(BaseModel):
    program: str
    options: OptionsModel = Field(default_factory=OptionsModel)


class StatsResponse(BaseModel):
    functions: dict[str, dict]


def _parse(text: str):
    try:
        program = parse_program(text)
    except ParseError as e:
        raise HTTPException(status_code=400, detail=f"parse error: {e}")
    diags = validate(program)
    if diags:
        raise HTTPException(status_code=400,
                            detail={"error": "program does not validate",
                                    "diagnostics": diags})
    return program


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/opt", response_model=OptResponse)
def opt(req: OptRequest):
    program = _parse(req.program)
    try:
        optimized, stats = run_pipeline(program, req.passes,
                                        req.options.to_pass_options())
    except InputError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except CheckerRejection as e:
        raise HTTPException(status_code=422, detail=str(e))
    return OptResponse(program=print_program(optimized), stats=stats)


@app.post("/run", response_model=RunResponse)
def run_endpoint(req: RunRequest):
    program = _parse(req.program)
    try:
        vals = tuple(value_from_text(s) for s in req.args)
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    out = run(program, vals, fuel=req.fuel, seed=req.seed)
    trace = [CallEvent(symbol=ev[1],
                       args=[value_to_text(a) for a in ev[2]],
                       ret=value_to_text(ev[3])) for ev in out.trace]
    tag = out.status[0]
    return RunResponse(
        status=tag,
        value=value_to_text(out.status[1]) if tag == "returned" else None,
        reason=out.status[1] if tag == "trapped" else None,
        trace=trace,
    )


@app.post("/typecheck", response_model=TypecheckResponse)
def typecheck(req: TypecheckRequest):
    program = _parse(req.program)
    result = {}
    for name in sorted(program.functions):
        try:
            env = infer(program.functions[name])
        except IllTyped as e:
            raise HTTPException(status_code=400,
                                detail=f"type error in {name}: {e}")
        result[name] = {f"r{r}": env[r] for r in sorted(env)}
    return TypecheckResponse(functions=result)


@app.post("/check-dup", response_model=CheckDupResponse)
def check_dup(req: CheckDupRequest):
    orig = _parse(req.original)
    transf = _parse(req.transformed)
    for name in sorted(transf.functions):
        if name not in orig.functions:
            raise HTTPException(status_code=422,
                                detail=f"{name}: not in original program")
        tfn = transf.functions[name]
        raw = req.revmap.get(name)
        try:
            revmap = ({int(k): v for k, v in raw.items()} if raw
                      else {n: n for n in tfn.code})
        except ValueError as e:
            raise HTTPException(status_code=400,
                                detail=f"bad reverse map: {e}")
        bad = dup.verify_dup(orig.functions[name], tfn, revmap)
        if bad is not None:
            raise HTTPException(
                status_code=422,
                detail=f"{name}: rejected at node {bad[0]}: {bad[1]}")
    return CheckDupResponse(ok=True)


@app.post("/difftest", response_model=DifftestResponse)
def difftest_endpoint(req: DifftestRequest):
    cfg = GenConfig(seed=req.seed, programs=req.programs)
    try:
        rep = difftest(cfg, req.passes, req.options.to_pass_options(),
                       runs_per_program=req.runs, fuel=req.fuel)
    except InputError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return DifftestResponse(
        ok=rep.ok(), programs=rep.programs, runs=rep.runs,
        returned=rep.returned, trapped=rep.trapped,
        out_of_fuel=rep.out_of_fuel, violations=rep.violations,
    )


@app.post("/stats", response_model=StatsResponse)
def stats(req: StatsRequest):
    program = _parse(req.program)
    try:
        res = analysis_stats(program, req.options.to_pass_options())
    except InputError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except CheckerRejection as e:
        raise HTTPException(status_code=422, detail=str(e))
    return StatsResponse(functions=res)
