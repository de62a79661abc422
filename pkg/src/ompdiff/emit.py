"""C++ translation-unit emission for validated program ASTs.

The emitted file contains the `compute` kernel, a `main` that parses one
positional argument per parameter (hex-significand tokens for floating
point, so values round-trip bit-exactly), fills each array with its seed
value, and prints exactly two records: `comp=<value>` and `time_us=<n>`.
Timestamps are taken immediately around the compute call at microsecond
granularity.
"""

from __future__ import annotations

from .nodes import (
    COMP, THREAD_ID, ArrayRef, Assignment, BinOp, Block, BoolExpr, Critical,
    Expr, ForLoop, GeneratorParams, IfBlock, MathCall, Num, OmpParallel,
    Paren, Program, TempDecl, VarTerm, walk_statements,
)
from .validate import validate_program

CTYPE = {"single": "float", "double": "double"}
STRTO = {"single": "strtof", "double": "strtod"}


class EmitError(ValueError):
    pass


def _uses_thread_id(expr_or_block) -> bool:
    def in_expr(e: Expr) -> bool:
        if isinstance(e, VarTerm):
            return e.name == THREAD_ID
        if isinstance(e, ArrayRef):
            return e.index == THREAD_ID
        if isinstance(e, Paren):
            return in_expr(e.inner)
        if isinstance(e, MathCall):
            return in_expr(e.arg)
        if isinstance(e, BinOp):
            return in_expr(e.lhs) or in_expr(e.rhs)
        return False

    for stmt in walk_statements(expr_or_block):
        if isinstance(stmt, Assignment):
            if in_expr(stmt.expr):
                return True
            if isinstance(stmt.target, ArrayRef) and stmt.target.index == THREAD_ID:
                return True
        elif isinstance(stmt, TempDecl) and in_expr(stmt.init):
            return True
        elif isinstance(stmt, IfBlock):
            if stmt.cond.lhs == THREAD_ID or in_expr(stmt.cond.rhs):
                return True
    return False


class _Emitter:
    def __init__(self, program: Program):
        self.program = program
        self.ctype = CTYPE[program.precision]
        self.int_names = {d.name for d in program.params if d.kind == "int-scalar"}
        self.lines: list[str] = []

    def put(self, depth: int, text: str) -> None:
        self.lines.append("  " * depth + text)

    # --- expressions ---

    def expr(self, e: Expr) -> str:
        if isinstance(e, Num):
            return e.text
        if isinstance(e, VarTerm):
            if e.name in self.int_names or e.name.startswith("i_") or e.name == THREAD_ID:
                return f"({self.ctype}){e.name}"
            return e.name
        if isinstance(e, ArrayRef):
            return self.subscript(e)
        if isinstance(e, Paren):
            return f"({self.expr(e.inner)})"
        if isinstance(e, MathCall):
            return f"std::{e.func}({self.expr(e.arg)})"
        if isinstance(e, BinOp):
            return f"{self.operand(e.lhs)} {e.op} {self.operand(e.rhs)}"
        raise EmitError(f"cannot emit {type(e).__name__}")

    def operand(self, e: Expr) -> str:
        text = self.expr(e)
        return f"({text})" if isinstance(e, BinOp) else text

    def subscript(self, ref: ArrayRef) -> str:
        if ref.modulo:
            return f"{ref.array}[{ref.index} % {self.program.array_size}]"
        return f"{ref.array}[{ref.index}]"

    def target(self, tgt) -> str:
        if isinstance(tgt, ArrayRef):
            return self.subscript(tgt)
        return tgt.name

    # --- statements ---

    def block(self, block: Block, depth: int) -> None:
        for stmt in block.statements:
            self.statement(stmt, depth)

    def statement(self, stmt, depth: int) -> None:
        if isinstance(stmt, Assignment):
            self.put(depth, f"{self.target(stmt.target)} {stmt.op} {self.expr(stmt.expr)};")
        elif isinstance(stmt, TempDecl):
            self.put(depth, f"{CTYPE[stmt.precision]} {stmt.name} = {self.expr(stmt.init)};")
        elif isinstance(stmt, IfBlock):
            self.put(depth, f"if ({stmt.cond.lhs} {stmt.cond.op} "
                            f"{self.expr(stmt.cond.rhs)}) {{")
            self.block(stmt.body, depth + 1)
            self.put(depth, "}")
        elif isinstance(stmt, ForLoop):
            if stmt.omp_for:
                self.put(depth, "#pragma omp for")
            self.put(depth, f"for (int {stmt.index} = 0; {stmt.index} < {stmt.bound}; "
                            f"++{stmt.index}) {{")
            self.block(stmt.body, depth + 1)
            self.put(depth, "}")
        elif isinstance(stmt, OmpParallel):
            self.put(depth, self.pragma(stmt))
            self.put(depth, "{")
            if _uses_thread_id(stmt.body):
                self.put(depth + 1, f"int {THREAD_ID} = omp_get_thread_num();")
            self.block(stmt.body, depth + 1)
            self.put(depth, "}")
        elif isinstance(stmt, Critical):
            self.put(depth, "#pragma omp critical")
            self.put(depth, "{")
            self.block(stmt.body, depth + 1)
            self.put(depth, "}")
        else:
            raise EmitError(f"cannot emit {type(stmt).__name__}")

    def pragma(self, region: OmpParallel) -> str:
        parts = ["#pragma omp parallel default(shared)"]
        if region.private:
            parts.append(f"private({', '.join(region.private)})")
        if region.firstprivate:
            parts.append(f"firstprivate({', '.join(region.firstprivate)})")
        if region.reduction:
            parts.append(f"reduction({region.reduction}: {COMP})")
        parts.append(f"num_threads({region.num_threads})")
        return " ".join(parts)

    # --- translation unit ---

    def param_decl(self, d) -> str:
        if d.kind == "int-scalar":
            return f"int {d.name}"
        if d.kind == "fp-scalar":
            return f"{CTYPE[d.precision]} {d.name}"
        return f"{CTYPE[d.precision]}* {d.name}"

    def emit(self) -> str:
        p = self.program
        self.put(0, "#include <chrono>")
        self.put(0, "#include <cmath>")
        self.put(0, "#include <cstdio>")
        self.put(0, "#include <cstdlib>")
        self.put(0, "#include <omp.h>")
        self.put(0, "")
        zero = "0.0f" if p.precision == "single" else "0.0"
        self.put(0, f"{self.ctype} {COMP} = {zero};")
        self.put(0, "")
        sig = ", ".join(self.param_decl(d) for d in p.params)
        self.put(0, f"void compute({sig}) {{")
        self.block(p.body, 1)
        self.put(0, "}")
        self.put(0, "")
        self.put(0, "int main(int argc, char* argv[]) {")
        self.put(1, f"if (argc != {len(p.params) + 1}) {{")
        self.put(2, f'fprintf(stderr, "expected {len(p.params)} arguments\\n");')
        self.put(2, "return 2;")
        self.put(1, "}")
        strto = STRTO[p.precision]
        for pos, d in enumerate(p.params, start=1):
            if d.kind == "int-scalar":
                self.put(1, f"int {d.name} = (int)strtol(argv[{pos}], 0, 10);")
            elif d.kind == "fp-scalar":
                self.put(1, f"{self.ctype} {d.name} = {strto}(argv[{pos}], 0);")
            else:
                self.put(1, f"{self.ctype} {d.name}_seed = {strto}(argv[{pos}], 0);")
                self.put(1, f"{self.ctype}* {d.name} = new {self.ctype}[{p.array_size}];")
                self.put(1, f"for (int q = 0; q < {p.array_size}; ++q) {{")
                self.put(2, f"{d.name}[q] = {d.name}_seed;")
                self.put(1, "}")
        args = ", ".join(d.name for d in p.params)
        self.put(1, "auto t_start = std::chrono::steady_clock::now();")
        self.put(1, f"compute({args});")
        self.put(1, "auto t_end = std::chrono::steady_clock::now();")
        self.put(1, "long long elapsed = std::chrono::duration_cast"
                    "<std::chrono::microseconds>(t_end - t_start).count();")
        self.put(1, f'printf("comp=%.17g\\n", (double){COMP});')
        self.put(1, 'printf("time_us=%lld\\n", elapsed);')
        for d in p.params:
            if d.kind == "fp-array":
                self.put(1, f"delete[] {d.name};")
        self.put(1, "return 0;")
        self.put(0, "}")
        return "\n".join(self.lines) + "\n"


def emit_source(program: Program, params: GeneratorParams) -> str:
    """Emit a compilable translation unit; rejects invalid programs."""
    violations = validate_program(program, params)
    if violations:
        summary = "; ".join(str(v) for v in violations[:5])
        raise EmitError(f"program fails validation ({len(violations)} issues): {summary}")
    return _Emitter(program).emit()
