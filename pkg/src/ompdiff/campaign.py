"""Campaign orchestration: generate tests, compile with every toolchain,
execute each binary on every input, and persist run records.

Compilation fans out across a thread pool; timed executions are strictly
serialized so measurements never overlap. Records append to a line-delimited
log as they complete, so an interrupted campaign resumes without duplicating
work. A hanging binary first receives SIGINT and is killed after a grace
period.
"""

from __future__ import annotations

import json
import os
import shlex
import shutil
import signal
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from random import Random
from typing import Optional

from .emit import emit_source
from .generator import generate_program
from .inputs import gen_input_sample, read_inputs_file, write_inputs_file
from .nodes import GeneratorParams

HANG_GRACE_SECONDS = 2.0


class ToolchainError(RuntimeError):
    """Toolchain misconfiguration; distinct from a COMPILE_FAIL result."""


class CampaignError(RuntimeError):
    pass


@dataclass
class ToolchainSpec:
    id: str
    template: str  # must contain {src} and {out}; {flags} expands the flag list
    flags: list[str] = field(default_factory=list)
    env: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if "{src}" not in self.template or "{out}" not in self.template:
            raise ToolchainError(
                f"toolchain {self.id!r}: template needs {{src}} and {{out}} placeholders")

    def command(self, src: str, out: str) -> list[str]:
        argv = []
        for word in shlex.split(self.template):
            if word == "{flags}":
                argv.extend(self.flags)
            else:
                argv.append(word.replace("{src}", src).replace("{out}", out))
        return argv

    def runtime_env(self) -> dict[str, str]:
        merged = dict(os.environ)
        merged.update(self.env)
        return merged


@dataclass
class RunRecord:
    test: int
    group: int
    input: int
    toolchain: str
    status: str  # OK | CRASH | HANG | COMPILE_FAIL
    time_us: Optional[int] = None
    comp: Optional[str] = None
    exit: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps({
            "test": self.test, "group": self.group, "input": self.input,
            "toolchain": self.toolchain, "status": self.status,
            "time_us": self.time_us, "comp": self.comp, "exit": self.exit,
        })

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        d = json.loads(line)
        return cls(test=d["test"], group=d["group"], input=d["input"],
                   toolchain=d["toolchain"], status=d["status"],
                   time_us=d.get("time_us"), comp=d.get("comp"),
                   exit=d.get("exit"))

    @property
    def key(self) -> tuple:
        return (self.group, self.test, self.input, self.toolchain)


@dataclass
class CampaignConfig:
    campaign_dir: Path
    toolchains: list[ToolchainSpec]
    generator: GeneratorParams = GeneratorParams()
    n_groups: int = 1
    tests_per_group: int = 10
    inputs_per_test: int = 3
    timeout_seconds: float = 60.0
    repetitions: int = 1

    def validate(self) -> None:
        if len(self.toolchains) < 2:
            raise CampaignError("differential testing needs at least 2 toolchains")
        ids = [t.id for t in self.toolchains]
        if len(set(ids)) != len(ids):
            raise CampaignError("toolchain ids must be unique")
        for tc in self.toolchains:
            tc.validate()
        if self.timeout_seconds <= 0:
            raise CampaignError("timeout_seconds must be > 0")
        if self.repetitions < 1:
            raise CampaignError("repetitions must be >= 1")
        if min(self.n_groups, self.tests_per_group, self.inputs_per_test) < 1:
            raise CampaignError("campaign sizes must be >= 1")
        self.generator.validate()

    # --- layout ---

    def test_source(self, group: int, test: int) -> Path:
        return Path(self.campaign_dir) / "_tests" / f"_group_{group}" / f"_test_{test}.cpp"

    def test_inputs(self, group: int, test: int) -> Path:
        return self.test_source(group, test).with_suffix(".inputs")

    def binary(self, toolchain_id: str, group: int, test: int) -> Path:
        return (Path(self.campaign_dir) / "_bin" / toolchain_id
                / f"_group_{group}" / f"_test_{test}")

    def records_path(self) -> Path:
        return Path(self.campaign_dir) / "records.jsonl"

    def verdicts_path(self) -> Path:
        return Path(self.campaign_dir) / "verdicts.jsonl"


def _mix(seed: int, group: int, test: int, salt: int = 0) -> int:
    """Stable 64-bit per-test seed derivation."""
    x = (seed ^ (group * 0x9E3779B97F4A7C15) ^ (test * 0xBF58476D1CE4E5B9)
         ^ (salt * 0x94D049BB133111EB)) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def test_params(config: CampaignConfig, group: int, test: int) -> GeneratorParams:
    return replace(config.generator,
                   rng_seed=_mix(config.generator.rng_seed, group, test))


def generate_tests(config: CampaignConfig) -> list[tuple[int, int]]:
    """Write every test source and its input file; byte-stable per config."""
    written = []
    for group in range(config.n_groups):
        for test in range(config.tests_per_group):
            params = test_params(config, group, test)
            program = generate_program(params)
            source = emit_source(program, params)
            src_path = config.test_source(group, test)
            src_path.parent.mkdir(parents=True, exist_ok=True)
            src_path.write_text(source)
            rng = Random(_mix(config.generator.rng_seed, group, test, salt=1))
            samples = [gen_input_sample(program, rng, sample_id=i)
                       for i in range(config.inputs_per_test)]
            write_inputs_file(config.test_inputs(group, test), samples)
            written.append((group, test))
    return written


# --- compilation ---

@dataclass
class CompileResult:
    ok: bool
    diagnostics: str = ""


def compile_test(source: Path, toolchain: ToolchainSpec, out: Path) -> CompileResult:
    toolchain.validate()
    argv = toolchain.command(str(source), str(out))
    if shutil.which(argv[0]) is None:
        raise ToolchainError(f"toolchain {toolchain.id!r}: compiler {argv[0]!r} not found")
    out.parent.mkdir(parents=True, exist_ok=True)
    proc = subprocess.run(argv, capture_output=True, text=True,
                          env=toolchain.runtime_env())
    diagnostics = (proc.stdout + proc.stderr).strip()
    if proc.returncode != 0:
        return CompileResult(False, diagnostics or f"exit code {proc.returncode}")
    return CompileResult(True, diagnostics)


def build_matrix(config: CampaignConfig) -> dict[tuple[str, int, int], CompileResult]:
    """Compile every (toolchain, test) pair; compilations run in parallel."""
    jobs = []
    for tc in config.toolchains:
        for group in range(config.n_groups):
            for test in range(config.tests_per_group):
                src = config.test_source(group, test)
                if not src.exists():
                    raise CampaignError(
                        f"missing test source {src}; run the generate stage first")
                jobs.append((tc, group, test, src))

    results: dict[tuple[str, int, int], CompileResult] = {}

    def build(job):
        tc, group, test, src = job
        out = config.binary(tc.id, group, test)
        if out.exists() and out.stat().st_mtime >= src.stat().st_mtime:
            return (tc.id, group, test), CompileResult(True, "cached")
        res = compile_test(src, tc, out)
        log = out.with_suffix(".compile.log")
        log.parent.mkdir(parents=True, exist_ok=True)
        log.write_text(res.diagnostics + "\n")
        if not res.ok and out.exists():
            out.unlink()
        return (tc.id, group, test), res

    with ThreadPoolExecutor(max_workers=min(8, os.cpu_count() or 2)) as pool:
        for key, res in pool.map(build, jobs):
            results[key] = res
    return results


# --- execution ---

@dataclass
class ExecResult:
    status: str
    time_us: Optional[int] = None
    comp: Optional[str] = None
    exit: Optional[str] = None


def _parse_run_output(stdout: str) -> Optional[tuple[str, int]]:
    comp = None
    time_us = None
    for line in stdout.splitlines():
        if line.startswith("comp=") and comp is None:
            comp = line[len("comp="):].strip()
        elif line.startswith("time_us=") and time_us is None:
            try:
                time_us = int(line[len("time_us="):].strip())
            except ValueError:
                return None
    if comp is None or time_us is None or time_us < 0:
        return None
    return comp, time_us


def _run_once(binary: str, args: list[str], timeout: float,
              env: Optional[dict[str, str]]) -> ExecResult:
    proc = subprocess.Popen([binary] + args, stdout=subprocess.PIPE,
                            stderr=subprocess.PIPE, text=True, env=env)
    try:
        stdout, _ = proc.communicate(timeout=timeout)
    except subprocess.TimeoutExpired:
        proc.send_signal(signal.SIGINT)
        try:
            proc.communicate(timeout=HANG_GRACE_SECONDS)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.communicate()
        return ExecResult("HANG", exit=f"timeout after {timeout}s (SIGINT sent)")
    if proc.returncode != 0:
        detail = (f"signal {-proc.returncode}" if proc.returncode < 0
                  else f"exit code {proc.returncode}")
        return ExecResult("CRASH", exit=detail)
    parsed = _parse_run_output(stdout)
    if parsed is None:
        return ExecResult("CRASH", exit="output contract violated")
    comp, time_us = parsed
    return ExecResult("OK", time_us=time_us, comp=comp)


def execute(binary: Path, args: list[str], timeout_seconds: float,
            repetitions: int = 1, env: Optional[dict[str, str]] = None) -> ExecResult:
    """Run one binary on one input; HANG after the timeout, CRASH on abnormal
    termination or broken output. With repetitions, time is the minimum and
    the printed comp value must not vary across repeats."""
    binary = Path(binary)
    if not binary.exists():
        raise CampaignError(f"binary {binary} does not exist")
    results = []
    for _ in range(max(1, repetitions)):
        res = _run_once(str(binary), args, timeout_seconds, env)
        if res.status != "OK":
            return res
        results.append(res)
    comps = {r.comp for r in results}
    if len(comps) > 1:
        return ExecResult("CRASH",
                          exit=f"output varied across repetitions: {sorted(comps)}")
    return ExecResult("OK", time_us=min(r.time_us for r in results),
                      comp=results[0].comp)


def load_records(path: Path) -> list[RunRecord]:
    if not Path(path).exists():
        return []
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(RunRecord.from_json(line))
    return records


def execute_matrix(config: CampaignConfig,
                   compile_results: Optional[dict] = None) -> list[RunRecord]:
    """Execute every (test, input, toolchain) combination not yet recorded.

    Compile failures become COMPILE_FAIL records, one per input, so the
    record count is always |toolchains| x tests x inputs.
    """
    records_path = config.records_path()
    existing = load_records(records_path)
    done = {r.key for r in existing}
    records = list(existing)
    records_path.parent.mkdir(parents=True, exist_ok=True)
    env_by_tc = {tc.id: tc.runtime_env() for tc in config.toolchains}
    with open(records_path, "a", encoding="utf-8") as log:
        for group in range(config.n_groups):
            for test in range(config.tests_per_group):
                inputs_path = config.test_inputs(group, test)
                if not inputs_path.exists():
                    raise CampaignError(
                        f"missing inputs {inputs_path}; run the generate stage first")
                inputs = read_inputs_file(inputs_path)[:config.inputs_per_test]
                for tc in config.toolchains:
                    binary = config.binary(tc.id, group, test)
                    fail_reason = None
                    if compile_results is not None:
                        res = compile_results.get((tc.id, group, test))
                        if res is not None and not res.ok:
                            fail_reason = res.diagnostics.splitlines()[:1]
                            fail_reason = fail_reason[0] if fail_reason else "compile failed"
                    if fail_reason is None and not binary.exists():
                        log_path = binary.with_suffix(".compile.log")
                        fail_reason = ("compile failed; see " + str(log_path)
                                       if log_path.exists()
                                       else "binary missing; run the build stage first")
                        if not log_path.exists():
                            raise CampaignError(fail_reason)
                    for input_id, tokens in enumerate(inputs):
                        key = (group, test, input_id, tc.id)
                        if key in done:
                            continue
                        if fail_reason is not None:
                            rec = RunRecord(test=test, group=group, input=input_id,
                                            toolchain=tc.id, status="COMPILE_FAIL",
                                            exit=fail_reason)
                        else:
                            res = execute(binary, tokens, config.timeout_seconds,
                                          config.repetitions, env_by_tc[tc.id])
                            rec = RunRecord(test=test, group=group, input=input_id,
                                            toolchain=tc.id, status=res.status,
                                            time_us=res.time_us, comp=res.comp,
                                            exit=res.exit)
                        log.write(rec.to_json() + "\n")
                        log.flush()
                        records.append(rec)
                        done.add(key)
    return records


def run_campaign(config: CampaignConfig) -> list[RunRecord]:
    """Full generate -> build -> execute cycle; resumable at the record level."""
    config.validate()
    generate_tests(config)
    compile_results = build_matrix(config)
    return execute_matrix(config, compile_results)


# --- local toolchain discovery ---

_PROBE = """#include <omp.h>
#include <cstdio>
int main() {
  double acc = 0.0;
  #pragma omp parallel num_threads(2) reduction(+: acc)
  { acc += omp_get_thread_num(); }
  printf("%g\\n", acc);
  return 0;
}
"""


def _gcc_include_dir() -> Optional[str]:
    gxx = shutil.which("g++")
    if gxx is None:
        return None
    try:
        out = subprocess.run([gxx, "-print-file-name=include"],
                             capture_output=True, text=True, timeout=30)
        inc = out.stdout.strip()
        if inc and Path(inc, "omp.h").exists():
            return inc
    except (OSError, subprocess.SubprocessError):
        pass
    return None


def probe_toolchain(spec: ToolchainSpec) -> bool:
    """Compile and run a tiny OpenMP program under the toolchain."""
    argv0 = shlex.split(spec.template)[0]
    if shutil.which(argv0) is None:
        return False
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "probe.cpp"
        out = Path(tmp) / "probe"
        src.write_text(_PROBE)
        try:
            res = compile_test(src, spec, out)
            if not res.ok:
                return False
            run = subprocess.run([str(out)], capture_output=True, timeout=30,
                                 env=spec.runtime_env())
            return run.returncode == 0
        except (ToolchainError, OSError, subprocess.SubprocessError):
            return False


def discover_default_toolchains(optimization: str = "-O3") -> list[ToolchainSpec]:
    """OpenMP toolchains usable on this host, probed with a smoke compile."""
    candidates = [
        ToolchainSpec(id="gcc", template="g++ {flags} {src} -o {out}",
                      flags=[optimization, "-fopenmp"]),
        ToolchainSpec(id="clang", template="clang++ {flags} {src} -o {out}",
                      flags=[optimization, "-fopenmp"]),
        ToolchainSpec(id="intel", template="icpx {flags} {src} -o {out}",
                      flags=[optimization, "-qopenmp"]),
    ]
    clang_inc = _gcc_include_dir()
    if clang_inc is not None:
        candidates.insert(2, ToolchainSpec(
            id="clang-libgomp", template="clang++ {flags} {src} -o {out}",
            flags=[optimization, "-fopenmp=libgomp", f"-I{clang_inc}"]))
    found = []
    seen_compilers = set()
    for spec in candidates:
        compiler = shlex.split(spec.template)[0]
        if compiler in seen_compilers:
            continue
        if probe_toolchain(spec):
            found.append(spec)
            seen_compilers.add(compiler)
    return found
